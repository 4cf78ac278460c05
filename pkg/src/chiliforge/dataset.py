"""Dataset packaging: bit-exact graph records, manifests, splits, statistics.

Record files are a flat sequence of typed fields (int64 / float64 arrays
plus utf-8 strings for the label names) ending in a 64-bit BLAKE2b
checksum; the manifest is UTF-8 text listing membership, per-file
checksums, splits, and Table-style summary statistics. The manifest is
written last, as the commit point of a dataset directory.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, nanogen
from .errors import (ChecksumMismatch, InsufficientClass, InvariantViolation,
                     SchemaVersionMismatch)

MAGIC = b"CFGRAPH1"
DTYPE_INT = 0
DTYPE_FLOAT = 1
DTYPE_UTF8 = 2

TOP_FIELDS = ("x", "edge_index", "edge_attr", "pos_abs", "pos_frac")
Y_FIELDS = (
    "crystal_type", "space_group_symbol", "space_group_number",
    "crystal_system", "crystal_system_number", "atomic_species",
    "n_atomic_species", "np_size", "n_atoms", "n_bonds", "cell_params",
    "unit_cell_node_feat", "unit_cell_edge_index", "unit_cell_edge_feat",
    "unit_cell_pos_abs", "unit_cell_pos_frac", "unit_cell_n_atoms",
    "unit_cell_n_bonds", "nd", "xrd", "nPDF", "xPDF", "sans", "saxs",
)
_INT_FIELDS = {"edge_index", "atomic_species", "unit_cell_edge_index"}
_INT_SCALARS = {"space_group_number", "crystal_system_number", "n_atomic_species",
                "n_atoms", "n_bonds", "unit_cell_n_atoms", "unit_cell_n_bonds"}
CURVE_SHAPES = {"saxs": 300, "sans": 300, "xrd": 580, "nd": 580,
                "xPDF": 6000, "nPDF": 6000}


def checksum64(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def _encode_field(name, value):
    out = [struct.pack("<I", len(name.encode())), name.encode()]
    if isinstance(value, str):
        payload = value.encode()
        out.append(struct.pack("<BB", DTYPE_UTF8, 1))
        out.append(struct.pack("<I", len(payload)))
        out.append(payload)
        return b"".join(out)
    arr = np.asarray(value)
    if arr.dtype.kind in "iu" or name in _INT_SCALARS or name in _INT_FIELDS:
        arr = arr.astype("<i8")
        tag = DTYPE_INT
    else:
        arr = arr.astype("<f8")
        tag = DTYPE_FLOAT
    out.append(struct.pack("<BB", tag, arr.ndim))
    out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    out.append(arr.tobytes())
    return b"".join(out)


def write_record(graph: nanogen.NanoparticleGraph) -> bytes:
    """Serialize one graph record deterministically."""
    missing = [k for k in Y_FIELDS if k not in graph.y]
    extra = [k for k in graph.y if k not in Y_FIELDS]
    if missing or extra:
        raise InvariantViolation(f"label fields missing={missing} extra={extra}")
    blob = [MAGIC]
    for name in TOP_FIELDS:
        blob.append(_encode_field(name, getattr(graph, name)))
    for name in Y_FIELDS:
        blob.append(_encode_field(f"y.{name}", graph.y[name]))
    body = b"".join(blob)
    return body + checksum64(body)


def _decode_fields(body: bytes):
    fields = {}
    pos = 0
    n = len(body)
    while pos < n:
        (name_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos:pos + name_len].decode()
        pos += name_len
        tag, rank = struct.unpack_from("<BB", body, pos)
        pos += 2
        shape = struct.unpack_from(f"<{rank}I", body, pos)
        pos += 4 * rank
        if tag == DTYPE_UTF8:
            fields[name] = body[pos:pos + shape[0]].decode()
            pos += shape[0]
        else:
            count = int(np.prod(shape)) if rank else 1
            dtype = "<i8" if tag == DTYPE_INT else "<f8"
            arr = np.frombuffer(body[pos:pos + 8 * count], dtype=dtype).reshape(shape)
            pos += 8 * count
            fields[name] = arr.copy() if rank else arr.copy().reshape(())[()]
    return fields


def read_record(data: bytes, validate=True) -> nanogen.NanoparticleGraph:
    """Parse record bytes; checks the checksum, magic, and invariants."""
    if len(data) < len(MAGIC) + 8:
        raise SchemaVersionMismatch("record too short")
    if data[:len(MAGIC)] != MAGIC:
        raise SchemaVersionMismatch(f"bad magic {data[:8]!r}")
    body, digest = data[:-8], data[-8:]
    if checksum64(body) != digest:
        raise ChecksumMismatch("record checksum does not match contents")
    fields = _decode_fields(body[len(MAGIC):])
    y = {}
    for name in Y_FIELDS:
        key = f"y.{name}"
        if key not in fields:
            raise InvariantViolation(f"record lacks field {key}")
        value = fields[key]
        if name in _INT_SCALARS:
            value = int(value)
        elif name == "np_size":
            value = float(value)
        y[name] = value
    graph = nanogen.NanoparticleGraph(
        x=fields["x"], edge_index=fields["edge_index"],
        edge_attr=fields["edge_attr"], pos_abs=fields["pos_abs"],
        pos_frac=fields["pos_frac"], y=y)
    if validate:
        validate_record(graph)
    return graph


def validate_record(graph):
    nanogen.validate_graph(graph)
    for kind, npoints in CURVE_SHAPES.items():
        arr = np.asarray(graph.y[kind])
        if arr.shape != (2, npoints):
            raise InvariantViolation(f"{kind} has shape {arr.shape}, "
                                     f"expected (2, {npoints})")
    if np.asarray(graph.y["cell_params"]).shape != (6,):
        raise InvariantViolation("cell_params must have 6 entries")


# ---------------------------------------------------------------------------
# splits and subsets


def split(ids, ratios=(0.8, 0.1, 0.1), seed=0):
    """Deterministic shuffle, then contiguous train/val/test partition;
    rounding remainders go to train."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    ids = list(ids)
    order = np.random.RandomState(seed).permutation(len(ids))
    shuffled = [ids[k] for k in order]
    n = len(ids)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


def stratified_subset(labelled_ids, per_class, seed=0):
    """Exactly per_class ids per class value, deterministically sampled.

    labelled_ids: iterable of (id, class value).
    """
    by_class = {}
    for gid, cls in labelled_ids:
        by_class.setdefault(cls, []).append(gid)
    rng = np.random.RandomState(seed)
    picked = []
    for cls in sorted(by_class):
        members = sorted(by_class[cls])
        if len(members) < per_class:
            raise InsufficientClass(f"class {cls!r} has {len(members)} < {per_class}")
        choice = rng.choice(len(members), size=per_class, replace=False)
        picked.extend(members[k] for k in sorted(choice))
    return picked


# ---------------------------------------------------------------------------
# statistics


@dataclass
class DatasetStats:
    n_graphs: int = 0
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    crystal_systems: dict = field(default_factory=dict)
    crystal_types: dict = field(default_factory=dict)
    unique_elements: dict = field(default_factory=dict)
    np_sizes: list = field(default_factory=list)
    isolated_nodes: int = 0

    def add(self, y, isolated=None):
        self.n_graphs += 1
        self.nodes.append(int(y["n_atoms"]))
        self.edges.append(int(y["n_bonds"]))
        self.crystal_systems[y["crystal_system"]] = \
            self.crystal_systems.get(y["crystal_system"], 0) + 1
        self.crystal_types[y["crystal_type"]] = \
            self.crystal_types.get(y["crystal_type"], 0) + 1
        k = int(y["n_atomic_species"])
        self.unique_elements[k] = self.unique_elements.get(k, 0) + 1
        self.np_sizes.append(float(y["np_size"]))
        if isolated is None:
            isolated = y.get("_isolated", 0)
        self.isolated_nodes += int(isolated)

    def summary(self):
        nodes = np.array(self.nodes)
        edges = np.array(self.edges)
        return {
            "graphs": self.n_graphs,
            "nodes_min": int(nodes.min()), "nodes_median": float(np.median(nodes)),
            "nodes_max": int(nodes.max()), "nodes_total": int(nodes.sum()),
            "edges_min": int(edges.min()), "edges_median": float(np.median(edges)),
            "edges_max": int(edges.max()), "edges_total": int(edges.sum()),
        }

    def to_text(self):
        s = self.summary()
        lines = [
            "graphs\ttotal={graphs}".format(**s),
            "nodes\tmin={nodes_min}\tmedian={nodes_median:g}\tmax={nodes_max}"
            "\ttotal={nodes_total}".format(**s),
            "edges\tmin={edges_min}\tmedian={edges_median:g}\tmax={edges_max}"
            "\ttotal={edges_total}".format(**s),
            "crystal_systems\t" + "\t".join(
                f"{k}={v}" for k, v in sorted(self.crystal_systems.items())),
            "crystal_types\t" + "\t".join(
                f"{k}={v}" for k, v in sorted(self.crystal_types.items())),
            "unique_elements\t" + "\t".join(
                f"{k}={v}" for k, v in sorted(self.unique_elements.items())),
            "np_size\tmin={:.3f}\tmedian={:.3f}\tmax={:.3f}".format(
                min(self.np_sizes), float(np.median(self.np_sizes)),
                max(self.np_sizes)),
            f"isolated_nodes\ttotal={self.isolated_nodes}",
        ]
        return "\n".join(lines) + "\n"


def statistics(graphs) -> DatasetStats:
    """Aggregate Table-style summary statistics from graphs or y dicts."""
    stats = DatasetStats()
    for g in graphs:
        if hasattr(g, "y"):
            stats.add(g.y, isolated=nanogen.isolated_node_count(g))
        else:
            stats.add(g)
    if stats.n_graphs == 0:
        raise ValueError("empty dataset")
    return stats


# ---------------------------------------------------------------------------
# dataset directories


@dataclass
class DatasetManifest:
    name: str
    created: str
    generator: str
    policy: str
    radii: tuple
    seed: int
    checksums: dict  # id -> hex digest
    splits: dict  # name -> list of ids
    stats_lines: list
    config_lines: list = field(default_factory=list)

    @property
    def ids(self):
        return sorted(self.checksums)


class DatasetWriter:
    """Streams records to <dir>/<id>.bin; the manifest commits the dataset."""

    def __init__(self, out_dir, name="dataset", policy="custom", radii=(),
                 seed=0, generator=None, config_lines=()):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.policy = policy
        self.radii = tuple(radii)
        self.seed = seed
        self.generator = generator or f"chiliforge {__version__}"
        self.config_lines = list(config_lines)
        self.checksums = {}
        self.stats = DatasetStats()

    def add(self, graph_id, graph=None, record_bytes=None):
        if record_bytes is None:
            record_bytes = write_record(graph)
        if graph_id in self.checksums:
            raise ValueError(f"duplicate graph id {graph_id}")
        (self.dir / f"{graph_id}.bin").write_bytes(record_bytes)
        self.checksums[graph_id] = checksum64(record_bytes[:-8]).hex()
        if graph is None:
            graph = read_record(record_bytes, validate=False)
        self.stats.add(graph.y, isolated=nanogen.isolated_node_count(graph))

    def register(self, graph_id, checksum_hex, y_summary):
        """Account for a record file some worker already wrote."""
        if graph_id in self.checksums:
            raise ValueError(f"duplicate graph id {graph_id}")
        self.checksums[graph_id] = checksum_hex
        self.stats.add(y_summary)

    def finalize(self, ratios=(0.8, 0.1, 0.1)):
        ids = sorted(self.checksums)
        train, val, test = split(ids, ratios, self.seed)
        manifest = DatasetManifest(
            name=self.name,
            created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            generator=self.generator,
            policy=self.policy,
            radii=self.radii,
            seed=self.seed,
            checksums=self.checksums,
            splits={"train": train, "validation": val, "test": test},
            stats_lines=self.stats.to_text().splitlines(),
            config_lines=self.config_lines,
        )
        (self.dir / "manifest").write_text(render_manifest(manifest))
        return manifest


def render_manifest(m: DatasetManifest) -> str:
    lines = [
        "# chiliforge dataset manifest",
        "format_version: 1",
        f"name: {m.name}",
        f"created: {m.created}",
        f"generator: {m.generator}",
        f"policy: {m.policy}",
        "radii: " + " ".join(f"{r:g}" for r in m.radii),
        f"seed: {m.seed}",
        f"graphs: {len(m.checksums)}",
    ]
    if m.config_lines:
        lines.append("[config]")
        lines.extend(m.config_lines)
    lines += [
        "[stats]",
        *m.stats_lines,
        "[checksums]",
        *(f"{gid} {digest}" for gid, digest in sorted(m.checksums.items())),
    ]
    for split_name in ("train", "validation", "test"):
        lines.append(f"[split {split_name}]")
        lines.extend(m.splits[split_name])
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> DatasetManifest:
    head = {}
    checksums = {}
    splits = {}
    stats_lines = []
    config_lines = []
    section = None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line.strip("[]")
            if section.startswith("split "):
                splits[section.split(" ", 1)[1]] = []
            continue
        if section is None:
            key, value = line.split(":", 1)
            head[key.strip()] = value.strip()
        elif section == "stats":
            stats_lines.append(line)
        elif section == "config":
            config_lines.append(line)
        elif section == "checksums":
            gid, digest = line.split()
            checksums[gid] = digest
        elif section.startswith("split "):
            splits[section.split(" ", 1)[1]].append(line)
    if head.get("format_version") != "1":
        raise SchemaVersionMismatch(
            f"manifest format_version {head.get('format_version')!r}")
    return DatasetManifest(
        name=head.get("name", ""), created=head.get("created", ""),
        generator=head.get("generator", ""), policy=head.get("policy", ""),
        radii=tuple(float(x) for x in head.get("radii", "").split()),
        seed=int(head.get("seed", "0")), checksums=checksums, splits=splits,
        stats_lines=stats_lines, config_lines=config_lines)


@dataclass
class Dataset:
    path: Path
    manifest: DatasetManifest

    @property
    def ids(self):
        return self.manifest.ids

    def record_path(self, graph_id):
        return self.path / f"{graph_id}.bin"

    def load(self, graph_id, validate=True):
        data = self.record_path(graph_id).read_bytes()
        expected = self.manifest.checksums[graph_id]
        if checksum64(data[:-8]).hex() != expected:
            raise ChecksumMismatch(graph_id)
        return read_record(data, validate=validate)

    def graphs(self, validate=True):
        for gid in self.ids:
            yield gid, self.load(gid, validate=validate)


def write_dataset(records, out_dir, name="dataset", policy="custom",
                  radii=(), seed=0, ratios=(0.8, 0.1, 0.1)) -> DatasetManifest:
    """Write (graph_id, graph) pairs as a committed dataset directory."""
    writer = DatasetWriter(out_dir, name=name, policy=policy, radii=radii,
                           seed=seed)
    for graph_id, graph in records:
        writer.add(graph_id, graph)
    return writer.finalize(ratios)


STAGE_MAGIC = b"CFSTAGE1"


def write_container(fields: dict, magic=STAGE_MAGIC) -> bytes:
    """Generic checksummed field container (pipeline stage files)."""
    blob = [magic]
    for name in sorted(fields):
        blob.append(_encode_field(name, fields[name]))
    body = b"".join(blob)
    return body + checksum64(body)


def read_container(data: bytes, magic=STAGE_MAGIC) -> dict:
    if data[:len(magic)] != magic:
        raise SchemaVersionMismatch(f"bad container magic {data[:8]!r}")
    body, digest = data[:-8], data[-8:]
    if checksum64(body) != digest:
        raise ChecksumMismatch("container checksum does not match contents")
    return _decode_fields(body[len(magic):])


def read_dataset(path, verify=True) -> Dataset:
    """Open a dataset directory; optionally verify every record.

    Verification checks per-record checksums, graph invariants, split
    consistency, and that the recorded totals match recomputed ones.
    """
    path = Path(path)
    manifest_file = path / "manifest"
    if not manifest_file.exists():
        raise FileNotFoundError(f"no manifest in {path}")
    manifest = parse_manifest(manifest_file.read_text())
    ds = Dataset(path, manifest)
    declared = sorted(manifest.checksums)
    split_union = sorted(gid for ids in manifest.splits.values() for gid in ids)
    if split_union != declared:
        raise InvariantViolation("splits do not exactly cover the graph ids")
    seen = set()
    for ids in manifest.splits.values():
        for gid in ids:
            if gid in seen:
                raise InvariantViolation(f"graph id {gid} in two splits")
            seen.add(gid)
    missing = [gid for gid in declared if not ds.record_path(gid).exists()]
    if missing:
        raise InvariantViolation(f"{len(missing)} record files missing: "
                                 f"{missing[:3]}...")
    if verify:
        stats = DatasetStats()
        for gid, graph in ds.graphs(validate=True):
            stats.add(graph.y, isolated=nanogen.isolated_node_count(graph))
        recorded = "\n".join(manifest.stats_lines) + "\n"
        if stats.to_text() != recorded:
            raise InvariantViolation("manifest statistics do not match records")
    return ds
