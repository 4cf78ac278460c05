"""Pipeline engine behind the CLI: stage functions and the fused generator.

Every stage is a pure function of its input directory, so chained stages
(clean -> cut -> simulate -> pack) produce byte-identical records to the
fused gen3k path, which calls the same per-cell code in memory. Work is
distributed across processes per cell; each record is a pure function of
its CIF bytes and the configuration, so worker count never changes output
bytes.
"""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cif as cifmod
from . import codclient, crystal, dataset, debye, elements, nanogen
from .errors import ChiliforgeError

STATS_KEYS = ("n_atoms", "n_bonds", "crystal_system", "crystal_type",
              "n_atomic_species", "np_size")


@dataclass
class PipelineConfig:
    policy: str = "chili3k"  # shipped name or path to a policy file
    templates: str | None = None  # path; None = shipped table
    radii: tuple = nanogen.DEFAULT_RADII
    seed: int = 0
    workers: int = 1
    out_dir: Path = Path("dataset")
    biso: float | None = None  # overrides every signal's default when set

    def debye_overrides(self):
        if self.biso is None:
            return None
        import dataclasses
        return {kind: dataclasses.replace(params, biso=self.biso)
                for kind, params in debye.DEFAULT_PARAMS.items()}

    def load_policy(self):
        if self.policy in ("chili3k", "chili100k"):
            return elements.policy(self.policy)
        return elements.load_policy(self.policy)

    def load_templates(self):
        return crystal.load_templates(self.templates)

    def echo_lines(self):
        return [
            f"policy = {self.policy}",
            f"templates = {self.templates or '(shipped)'}",
            "radii = " + " ".join(f"{r:g}" for r in self.radii),
            f"seed = {self.seed}",
            f"biso = {self.biso if self.biso is not None else '(default)'}",
        ]


def load_config(path) -> PipelineConfig:
    cfg = PipelineConfig()
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key == "policy":
            cfg.policy = value
        elif key == "templates":
            cfg.templates = value
        elif key == "radii":
            cfg.radii = tuple(float(x) for x in value.replace(",", " ").split())
        elif key == "seed":
            cfg.seed = int(value)
        elif key == "workers":
            cfg.workers = int(value)
        elif key == "out":
            cfg.out_dir = Path(value)
        elif key == "biso":
            cfg.biso = float(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return cfg


def slugify(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name.strip()).strip("_")


def radius_tag(radius: float) -> str:
    return f"r{radius:05.1f}"


# ---------------------------------------------------------------------------
# per-cell generation (shared by gen3k and the cut/simulate stages)


def cell_from_cif_bytes(data: bytes, source_id: str):
    """parse -> clean -> extract -> expand; rejection raises ChiliforgeError.

    Returns (expanded cell, crystal type) where the type comes from the
    file's _chemical_name_structure_type tag when present, else "Unknown".
    """
    doc = cifmod.parse(data, source_id)
    cleaned, report = cifmod.clean(doc)
    if report.rejected:
        raise ChiliforgeError(f"{source_id}: rejected ({report.rejection_reason})")
    cell = cifmod.extract_unit_cell(cleaned)
    crystal_type = cleaned.get("_chemical_name_structure_type") or "Unknown"
    return crystal.expand_symmetry(cell), crystal_type


def cut_cell(cell, radii):
    """Geometry stage: centered cloud, edges, and per-radius inclusion levels.

    The requested block diameter exceeds twice the largest radius by the
    non-metal padding reach plus one cell diagonal (the centering pivot can
    sit that far off the block center), so no particle ever samples the
    tiling boundary.
    """
    max_thr = 2.0 * max(elements.interaction_radius(s.element)
                        for s in cell.sites)
    diagonal = float(np.linalg.norm(crystal.lattice_matrix(cell).sum(axis=0)))
    request = 2.0 * max(radii) + 2.0 * max_thr + 2.0 * diagonal
    cloud = nanogen.build_supercell(cell, request)
    cloud = nanogen.center_cloud(cloud)
    reach = max(radii) + max_thr
    cloud = nanogen.trim_cloud(cloud, reach)
    edges = nanogen.build_edges(cloud)
    nlevels = len(radii)
    levels = np.full(cloud.n_atoms, nlevels, dtype=np.int64)
    for k in reversed(range(nlevels)):
        levels[nanogen.cut_nanoparticle(cloud, edges, radii[k])] = k
    return cloud, edges, levels


def graphs_for_cell(cell, radii, crystal_type="Unknown", overrides=None):
    """All per-radius graph records of one cell (single distance pass)."""
    radii = tuple(sorted(radii))
    cloud, edges, levels = cut_cell(cell, radii)
    inside = levels < len(radii)
    hists = debye.build_nested_histograms(
        cloud.positions[inside], list(cloud.symbols[inside]),
        levels[inside], len(radii))
    subgraph = nanogen.unit_cell_graph(cell)
    out = []
    for k, radius in enumerate(radii):
        included = nanogen.cut_nanoparticle(cloud, edges, radius)
        curves = debye.curves_from_histogram(hists[k], overrides)
        graph = nanogen.assemble_graph(cell, cloud, edges, included, curves,
                                       crystal_type, subgraph)
        out.append((radius, graph))
    return out


def _summarize(graph):
    summary = {k: graph.y[k] for k in STATS_KEYS}
    summary["_isolated"] = nanogen.isolated_node_count(graph)
    return summary


def _cell_worker(args):
    """Generate, serialize, and write all records of one cell id."""
    (cell_id, cif_path, records_dir, radii, biso) = args
    overrides = None
    if biso is not None:
        import dataclasses
        overrides = {kind: dataclasses.replace(params, biso=biso)
                     for kind, params in debye.DEFAULT_PARAMS.items()}
    cell, crystal_type = cell_from_cif_bytes(Path(cif_path).read_bytes(), cell_id)
    results = []
    for radius, graph in graphs_for_cell(cell, radii, crystal_type, overrides):
        graph_id = f"{cell_id}-{radius_tag(radius)}"
        blob = dataset.write_record(graph)
        (Path(records_dir) / f"{graph_id}.bin").write_bytes(blob)
        results.append((graph_id, dataset.checksum64(blob[:-8]).hex(),
                        _summarize(graph)))
    return results


def _run_parallel(worker, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield worker(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(worker, tasks, chunksize=1)


# ---------------------------------------------------------------------------
# stage: template instantiation (gen3k stage 1)


def write_template_cifs(config: PipelineConfig, cif_dir) -> list:
    """Instantiate every template x allowed metal; one CIF per combination.

    Returns [(cell_id, cif_path)] in deterministic order; the crystal type
    travels inside the CIF itself.
    """
    cif_dir = Path(cif_dir)
    cif_dir.mkdir(parents=True, exist_ok=True)
    templates = config.load_templates()
    policy = config.load_policy()
    metals = sorted(policy.allowed_metals)
    items = []
    for template in templates:
        for metal in metals:
            cell = crystal.instantiate_template(template, elements.lookup(metal))
            cell_id = f"{slugify(template.name)}-{metal}"
            path = cif_dir / f"{cell_id}.cif"
            path.write_bytes(crystal.write_cif(cell, structure_type=template.name))
            items.append((cell_id, path))
    return items


# ---------------------------------------------------------------------------
# stage: clean


def clean_directory(in_dir, out_dir, policy=None, max_volume=None):
    """Repair every CIF; write cleaned files plus per-file reports.

    A single broken file never aborts the batch. Returns
    (cleaned names, rejected names).
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cleaned_names, rejected = [], []
    for path in sorted(in_dir.glob("*.cif")):
        report_path = out_dir / f"{path.stem}.report.txt"
        try:
            doc = cifmod.parse(path.read_bytes(), path.stem)
        except cifmod.CifSyntaxError as err:
            report_path.write_text(f"rejected\tUnfixableSyntax\t{err}\t\n")
            rejected.append(path.stem)
            continue
        cleaned, report = cifmod.clean(doc)
        if not report.rejected and (policy is not None or max_volume is not None):
            try:
                cell = cifmod.extract_unit_cell(cleaned)
                accepted, reason = True, None
                if policy is not None:
                    accepted, reason = codclient.curate(cell, policy)
                elif max_volume is not None and cifmod.cell_volume(cell) >= max_volume:
                    accepted, reason = False, codclient.REASON_VOLUME
                if not accepted:
                    report.log("curated-out", reason, "", "")
                    report.reject("Other")
            except ChiliforgeError as err:
                report.log("curated-out", type(err).__name__, str(err), "")
                report.reject("Other")
        report_path.write_text(report.to_text() or "clean\n")
        if report.rejected:
            rejected.append(path.stem)
            continue
        (out_dir / path.name).write_bytes(cifmod.write_clean_cif(cleaned))
        cleaned_names.append(path.stem)
    return cleaned_names, rejected


# ---------------------------------------------------------------------------
# stage: cut (geometry containers)


def _cut_worker(args):
    cell_id, cif_path, stage_dir, radii = args
    cell, crystal_type = cell_from_cif_bytes(Path(cif_path).read_bytes(), cell_id)
    cloud, edges, levels = cut_cell(cell, radii)
    subgraph = nanogen.unit_cell_graph(cell)
    fields = {
        "cell_id": cell_id,
        "crystal_type": crystal_type,
        "radii": np.asarray(radii, dtype=np.float64),
        "cell_params": np.array(cell.lengths + cell.angles),
        "space_group_number": cell.spacegroup_number,
        "space_group_symbol": cell.spacegroup_symbol,
        "positions": cloud.positions,
        "atomic_numbers": np.array(
            [elements.lookup(str(s)).atomic_number for s in
             np.unique(cloud.symbols)], dtype=np.int64)[
                 np.unique(cloud.symbols, return_inverse=True)[1]],
        "levels": levels,
        "edge_index": edges.index,
        "edge_dist": edges.dist,
        "min_cell_distance": cloud.min_cell_distance,
    }
    for key, value in subgraph.items():
        fields[f"sub.{key}"] = value
    (Path(stage_dir) / f"{cell_id}.cut").write_bytes(dataset.write_container(fields))
    return cell_id


def cut_directory(in_dir, stage_dir, radii, workers=1):
    """Geometry stage for every cleaned CIF in a directory."""
    in_dir, stage_dir = Path(in_dir), Path(stage_dir)
    stage_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(p.stem, p, stage_dir, tuple(sorted(radii)))
             for p in sorted(in_dir.glob("*.cif"))]
    return list(_run_parallel(_cut_worker, tasks, workers))


# ---------------------------------------------------------------------------
# stage: simulate (stage containers -> full records)


def _rebuild_cell(fields):
    params = fields["cell_params"]
    return cifmod.UnitCell(
        a=float(params[0]), b=float(params[1]), c=float(params[2]),
        alpha=float(params[3]), beta=float(params[4]), gamma=float(params[5]),
        spacegroup_number=int(fields["space_group_number"]),
        spacegroup_symbol=fields["space_group_symbol"],
        sites=(), source_id=fields["cell_id"])


def _simulate_worker(args):
    stage_path, records_dir, biso = args
    overrides = None
    if biso is not None:
        import dataclasses
        overrides = {kind: dataclasses.replace(params, biso=biso)
                     for kind, params in debye.DEFAULT_PARAMS.items()}
    fields = dataset.read_container(Path(stage_path).read_bytes())
    cell = _rebuild_cell(fields)
    radii = tuple(fields["radii"].tolist())
    numbers = fields["atomic_numbers"]
    symbols = np.array([elements.lookup(int(z)).symbol for z in
                        np.unique(numbers)])[np.unique(numbers, return_inverse=True)[1]]
    metal = np.array([elements.lookup(str(s)).is_metal for s in symbols])
    radii_atoms = np.array([elements.interaction_radius(str(s)) for s in symbols])
    positions = fields["positions"]
    cloud = nanogen.AtomCloud(
        positions=positions, symbols=symbols, is_metal=metal,
        interaction_radii=radii_atoms,
        origin_distances=np.linalg.norm(positions, axis=1),
        min_cell_distance=float(fields["min_cell_distance"]),
        center=np.zeros(3), provenance=fields["cell_id"])
    edges = nanogen.EdgeSet(fields["edge_index"], fields["edge_dist"])
    levels = fields["levels"]
    subgraph = {key[4:]: value for key, value in fields.items()
                if key.startswith("sub.")}
    subgraph["unit_cell_n_atoms"] = int(subgraph["unit_cell_n_atoms"])
    subgraph["unit_cell_n_bonds"] = int(subgraph["unit_cell_n_bonds"])

    inside = levels < len(radii)
    hists = debye.build_nested_histograms(
        positions[inside], list(symbols[inside]), levels[inside], len(radii))
    results = []
    for k, radius in enumerate(radii):
        included = nanogen.cut_nanoparticle(cloud, edges, radius)
        curves = debye.curves_from_histogram(hists[k], overrides)
        graph = nanogen.assemble_graph(cell, cloud, edges, included, curves,
                                       fields["crystal_type"], subgraph)
        graph_id = f"{fields['cell_id']}-{radius_tag(radius)}"
        blob = dataset.write_record(graph)
        (Path(records_dir) / f"{graph_id}.bin").write_bytes(blob)
        results.append((graph_id, dataset.checksum64(blob[:-8]).hex(),
                        _summarize(graph)))
    return results


def simulate_directory(stage_dir, records_dir, workers=1, biso=None):
    stage_dir, records_dir = Path(stage_dir), Path(records_dir)
    records_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(p, records_dir, biso) for p in sorted(stage_dir.glob("*.cut"))]
    summaries = []
    for result in _run_parallel(_simulate_worker, tasks, workers):
        summaries.extend(result)
    return summaries


def simulate_single_cif(cif_path, out_dir, radii, biso=None):
    """Standalone CIF -> per-radius curve text files (2 columns: grid, value)."""
    cif_path, out_dir = Path(cif_path), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cell, crystal_type = cell_from_cif_bytes(cif_path.read_bytes(), cif_path.stem)
    overrides = None
    if biso is not None:
        import dataclasses
        overrides = {kind: dataclasses.replace(params, biso=biso)
                     for kind, params in debye.DEFAULT_PARAMS.items()}
    written = []
    for radius, graph in graphs_for_cell(cell, radii, crystal_type, overrides):
        for kind in debye.SIGNAL_KINDS:
            key = {"xpdf": "xPDF", "npdf": "nPDF"}.get(kind, kind)
            curve = np.asarray(graph.y[key])
            path = out_dir / f"{cif_path.stem}-{radius_tag(radius)}-{key}.txt"
            np.savetxt(path, curve.T, header=f"{key} grid value")
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# stage: pack


def pack_records(records_dir, out_dir, name, config: PipelineConfig,
                 summaries=None):
    """Assemble record files into a committed dataset directory."""
    records_dir, out_dir = Path(records_dir), Path(out_dir)
    writer = dataset.DatasetWriter(
        out_dir, name=name, policy=config.policy, radii=config.radii,
        seed=config.seed, config_lines=config.echo_lines())
    known = {gid: (chk, ysum) for gid, chk, ysum in (summaries or [])}
    for path in sorted(records_dir.glob("*.bin")):
        graph_id = path.stem
        blob = path.read_bytes()
        if out_dir != records_dir:
            (out_dir / path.name).write_bytes(blob)
        if graph_id in known:
            checksum, ysum = known[graph_id]
            writer.register(graph_id, checksum, ysum)
        else:
            graph = dataset.read_record(blob)
            writer.register(graph_id, dataset.checksum64(blob[:-8]).hex(),
                            _summarize(graph))
    if not writer.checksums:
        raise ChiliforgeError(f"no records found in {records_dir}")
    return writer.finalize()


# ---------------------------------------------------------------------------
# fused generator


def gen3k(config: PipelineConfig, progress=None):
    """Templates -> CIFs -> graphs -> packaged dataset, fused per cell."""
    out = Path(config.out_dir)
    cif_dir = out / "cifs"
    records_dir = out / "dataset"
    records_dir.mkdir(parents=True, exist_ok=True)
    items = write_template_cifs(config, cif_dir)
    tasks = [(cell_id, path, records_dir, tuple(sorted(config.radii)), config.biso)
             for cell_id, path in items]
    summaries = []
    done = 0
    for result in _run_parallel(_cell_worker, tasks, config.workers):
        summaries.extend(result)
        done += 1
        if progress:
            progress(done, len(tasks))
    manifest = pack_records(records_dir, records_dir, "chili3k", config,
                            summaries)
    return manifest
