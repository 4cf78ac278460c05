"""Static plot rendering for dataset statistics and scattering curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SYSTEM_ORDER = ("triclinic", "monoclinic", "orthorhombic", "tetragonal",
                "trigonal", "hexagonal", "cubic")


def _bar(ax, labels, values, title, rotate=False):
    ax.bar(range(len(labels)), values, color="#3b73b9")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60 if rotate else 0, ha="right" if rotate else "center")
    ax.set_ylabel("graphs")
    ax.set_title(title)


def render_statistics(stats, out_dir, np_size_bins=30):
    """Histogram images for crystal systems, unique elements, and sizes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    values = [stats.crystal_systems.get(name, 0) for name in SYSTEM_ORDER]
    _bar(ax, SYSTEM_ORDER, values, "Crystal systems", rotate=True)
    fig.tight_layout()
    path = out_dir / "crystal_systems.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted(stats.unique_elements)
    _bar(ax, [str(k) for k in keys], [stats.unique_elements[k] for k in keys],
         "Unique elements per graph")
    ax.set_xlabel("number of unique elements")
    fig.tight_layout()
    path = out_dir / "unique_elements.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(stats.np_sizes, bins=np_size_bins, color="#3b73b9")
    ax.set_xlabel("particle size (Å)")
    ax.set_ylabel("graphs")
    ax.set_title("Nanoparticle sizes")
    fig.tight_layout()
    path = out_dir / "np_sizes.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if stats.crystal_types and set(stats.crystal_types) != {"Unknown"}:
        fig, ax = plt.subplots(figsize=(7, 4))
        names = sorted(stats.crystal_types)
        _bar(ax, names, [stats.crystal_types[n] for n in names],
             "Crystal types", rotate=True)
        fig.tight_layout()
        path = out_dir / "crystal_types.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_curves(graph, out_path, title=""):
    """One image with the six scattering signals of a graph record."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(3, 2, figsize=(9, 8))
    order = ("saxs", "sans", "xrd", "nd", "xPDF", "nPDF")
    for ax, key in zip(axes.ravel(), order):
        arr = np.asarray(graph.y[key])
        ax.plot(arr[0], arr[1], lw=0.8)
        ax.set_title(key)
        ax.set_xlabel("r (Å)" if "PDF" in key else "Q (1/Å)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
