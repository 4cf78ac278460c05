"""Finite-particle construction: supercells, cutouts, and graph records.

A supercell big enough for the largest requested particle is tiled once,
centered on the most central metal atom, and edge-built once; the spherical
cutouts for every radius are then subsets of that one cloud. Edges connect
atoms whose interaction neighborhoods (1.25 x Slater radius) overlap, with
the documented 110 %-of-shortest-distance fallback when nothing overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import crystal, elements
from .errors import CellTooLarge, EmptyParticle, InvariantViolation, NoMetalAtom

PADDING = 5.0  # Angstrom of supercell margin beyond the largest diameter
FALLBACK_SCALE = 0.55  # per-atom radius so that r_i + r_j = 1.10 * d_min
DEFAULT_RADII = (5.0, 10.0, 15.0, 20.0, 25.0)
MAX_REPLICATIONS = 64


@dataclass
class AtomCloud:
    positions: np.ndarray  # (n, 3) absolute Angstrom
    symbols: np.ndarray  # (n,) element symbols
    is_metal: np.ndarray  # (n,) bool
    interaction_radii: np.ndarray  # (n,) Angstrom
    origin_distances: np.ndarray  # (n,) Angstrom
    min_cell_distance: float  # shortest interatomic distance of the parent cell
    center: np.ndarray  # geometric center of the tiled block
    provenance: str = ""

    @property
    def n_atoms(self):
        return len(self.symbols)


@dataclass
class EdgeSet:
    index: np.ndarray  # (m, 2) int64, i < j, lexicographically sorted
    dist: np.ndarray  # (m,)
    fallback: bool = False


def _element_arrays(symbols):
    sym = np.asarray(symbols)
    uniq, inverse = np.unique(sym, return_inverse=True)
    radii = np.array([elements.interaction_radius(str(s)) for s in uniq])
    metal = np.array([elements.lookup(str(s)).is_metal for s in uniq], dtype=bool)
    return radii[inverse], metal[inverse], sym


def min_cell_distance(cell) -> float:
    """Shortest interatomic distance of the cell, periodic images included."""
    frac = np.array([s.frac for s in cell.sites], dtype=float)
    if len(frac) == 0:
        raise ValueError("cell has no sites")
    lattice = crystal.lattice_matrix(cell)
    offsets = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1)
                        for k in (-1, 0, 1)], dtype=float)
    tiled = (frac[None, :, :] + offsets[:, None, :]).reshape(-1, 3) @ lattice
    base = frac @ lattice
    d = np.linalg.norm(base[:, None, :] - tiled[None, :, :], axis=-1)
    d[d < 1e-9] = np.inf  # self images
    return float(d.min())


def build_supercell(cell, max_diameter, cap=MAX_REPLICATIONS) -> AtomCloud:
    """Tile the expanded cell so every lattice direction spans the largest
    particle diameter plus padding."""
    if max_diameter <= 0:
        raise ValueError("max_diameter must be positive")
    reps = []
    for length in cell.lengths:
        n = math.ceil((max_diameter + PADDING) / length)
        if n > cap:
            raise CellTooLarge(f"{n} replications along a {length:.3f} A edge")
        reps.append(max(n, 1))
    frac = np.array([s.frac for s in cell.sites], dtype=float)
    site_symbols = [s.element for s in cell.sites]
    offsets = np.array([(i, j, k)
                        for i in range(reps[0])
                        for j in range(reps[1])
                        for k in range(reps[2])], dtype=float)
    all_frac = (offsets[:, None, :] + frac[None, :, :]).reshape(-1, 3)
    lattice = crystal.lattice_matrix(cell)
    positions = all_frac @ lattice
    symbols = np.array(site_symbols * len(offsets))
    radii, metal, symbols = _element_arrays(symbols)
    center = (np.array(reps, dtype=float) / 2.0) @ lattice
    return AtomCloud(
        positions=positions,
        symbols=symbols,
        is_metal=metal,
        interaction_radii=radii,
        origin_distances=np.linalg.norm(positions, axis=1),
        min_cell_distance=min_cell_distance(cell),
        center=center,
        provenance=cell.source_id,
    )


def center_cloud(cloud: AtomCloud) -> AtomCloud:
    """Move the metal atom nearest the block center to the origin."""
    if not cloud.is_metal.any():
        raise NoMetalAtom(cloud.provenance or "cloud")
    d_center = np.linalg.norm(cloud.positions - cloud.center, axis=1)
    d_center[~cloud.is_metal] = np.inf
    pivot = int(np.argmin(d_center))  # argmin takes the lowest index on ties
    positions = cloud.positions - cloud.positions[pivot]
    return replace(cloud,
                   positions=positions,
                   origin_distances=np.linalg.norm(positions, axis=1),
                   center=cloud.center - cloud.positions[pivot])


def trim_cloud(cloud: AtomCloud, keep_distance) -> AtomCloud:
    """Drop atoms that can never enter a cutout of the given reach."""
    mask = cloud.origin_distances <= keep_distance
    return replace(cloud,
                   positions=cloud.positions[mask],
                   symbols=cloud.symbols[mask],
                   is_metal=cloud.is_metal[mask],
                   interaction_radii=cloud.interaction_radii[mask],
                   origin_distances=cloud.origin_distances[mask])


def _grid_pairs(positions, radii):
    """Candidate pairs from a uniform grid with cells of the max threshold."""
    n = len(positions)
    cell_size = 2.0 * float(radii.max())
    if cell_size <= 0.0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    lo = positions.min(axis=0)
    keys = np.floor((positions - lo) / cell_size).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    starts = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
    bounds = np.concatenate([[0], starts, [n]])
    voxels = {}
    for b in range(len(bounds) - 1):
        members = order[bounds[b]:bounds[b + 1]]
        voxels[tuple(sorted_keys[bounds[b]])] = members

    half = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, -1, 0),
            (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1), (1, 1, 1), (1, 1, -1),
            (1, -1, 1), (1, -1, -1)]
    pair_i, pair_j, pair_d = [], [], []
    for key, members in voxels.items():
        for off in half:
            other = members if off == (0, 0, 0) else voxels.get(
                (key[0] + off[0], key[1] + off[1], key[2] + off[2]))
            if other is None:
                continue
            d = np.linalg.norm(positions[members][:, None, :]
                               - positions[other][None, :, :], axis=-1)
            thresh = radii[members][:, None] + radii[other][None, :]
            hit = d <= thresh
            if off == (0, 0, 0):
                hit &= members[:, None] < other[None, :]
            ii, jj = np.nonzero(hit)
            if ii.size:
                pair_i.append(members[ii])
                pair_j.append(other[jj])
                pair_d.append(d[ii, jj])
    if not pair_i:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    i = np.concatenate(pair_i)
    j = np.concatenate(pair_j)
    d = np.concatenate(pair_d)
    lohi = np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1)
    order = np.lexsort((lohi[:, 1], lohi[:, 0]))
    return lohi[order], d[order]


def build_edges(cloud: AtomCloud) -> EdgeSet:
    """Undirected edges wherever interaction neighborhoods overlap (closed
    inequality). If nothing overlaps, every radius is reset to
    0.55 x the cell's shortest interatomic distance and edges are rebuilt."""
    index, dist = _grid_pairs(cloud.positions, cloud.interaction_radii)
    if index.shape[0] == 0 and cloud.n_atoms > 1:
        radii = np.full(cloud.n_atoms, FALLBACK_SCALE * cloud.min_cell_distance)
        index, dist = _grid_pairs(cloud.positions, radii)
        return EdgeSet(index, dist, fallback=True)
    return EdgeSet(index, dist)


def cut_nanoparticle(cloud: AtomCloud, edges: EdgeSet, radius) -> np.ndarray:
    """Sorted atom indices of the particle at the given radius.

    Metals enter by distance (<= radius); non-metals by distance or by
    sharing an edge with a core metal atom.
    """
    within = cloud.origin_distances <= radius
    core_metal = within & cloud.is_metal
    include = core_metal | (within & ~cloud.is_metal)
    if edges.index.shape[0]:
        i, j = edges.index[:, 0], edges.index[:, 1]
        attach = np.zeros(cloud.n_atoms, dtype=bool)
        mask = core_metal[j] & ~cloud.is_metal[i]
        attach[i[mask]] = True
        mask = core_metal[i] & ~cloud.is_metal[j]
        attach[j[mask]] = True
        include |= attach
    picked = np.nonzero(include)[0]
    if picked.size == 0:
        raise EmptyParticle(f"radius {radius} A")
    return picked


def max_pairwise_distance(positions) -> float:
    """Exact particle diameter; convex hull keeps it cheap for big clouds."""
    n = len(positions)
    if n < 2:
        return 0.0
    pts = positions
    if n > 30:
        try:
            pts = positions[ConvexHull(positions).vertices]
        except QhullError:
            pass  # degenerate (collinear/coplanar) clouds: brute force below
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    return float(d.max())


# ---------------------------------------------------------------------------
# graph record


@dataclass
class NanoparticleGraph:
    x: np.ndarray  # (n, 4) [atomic_number, radius, weight, electron_affinity]
    edge_index: np.ndarray  # (2, m) both directions
    edge_attr: np.ndarray  # (m, 1) distances
    pos_abs: np.ndarray  # (n, 3)
    pos_frac: np.ndarray  # (n, 3) unwrapped, parent-cell basis
    y: dict


def _node_features(symbols):
    sym = np.asarray(symbols)
    uniq, inverse = np.unique(sym, return_inverse=True)
    rows = []
    for s in uniq:
        rec = elements.lookup(str(s))
        rows.append((rec.atomic_number, rec.slater_radius, rec.atomic_weight,
                     rec.electron_affinity))
    return np.array(rows, dtype=np.float64)[inverse]


def _directed_edges(index, dist):
    """COO with both directions, lexicographically sorted, plus attributes."""
    if index.shape[0] == 0:
        return np.empty((2, 0), dtype=np.int64), np.empty((0, 1))
    src = np.concatenate([index[:, 0], index[:, 1]])
    dst = np.concatenate([index[:, 1], index[:, 0]])
    attr = np.concatenate([dist, dist])
    order = np.lexsort((dst, src))
    return np.stack([src[order], dst[order]]), attr[order][:, None]


def unit_cell_graph(cell) -> dict:
    """The unit-cell subgraph fields (single cell, no periodic images)."""
    frac = np.array([s.frac for s in cell.sites], dtype=float)
    lattice = crystal.lattice_matrix(cell)
    positions = frac @ lattice
    radii, metal, symbols = _element_arrays([s.element for s in cell.sites])
    cloud = AtomCloud(positions, symbols, metal, radii,
                      np.linalg.norm(positions, axis=1),
                      min_cell_distance(cell), np.zeros(3), cell.source_id)
    edges = build_edges(cloud)
    edge_index, edge_attr = _directed_edges(edges.index, edges.dist)
    return {
        "unit_cell_node_feat": _node_features(symbols),
        "unit_cell_edge_index": edge_index,
        "unit_cell_edge_feat": edge_attr,
        "unit_cell_pos_abs": positions,
        "unit_cell_pos_frac": frac,
        "unit_cell_n_atoms": len(symbols),
        "unit_cell_n_bonds": edge_index.shape[1],
    }


def assemble_graph(cell, cloud: AtomCloud, edges: EdgeSet, included,
                   curves=None, crystal_type="Unknown",
                   cell_subgraph=None) -> NanoparticleGraph:
    """Full graph record for one cutout of a centered cloud."""
    included = np.asarray(included, dtype=np.int64)
    if included.size == 0:
        raise EmptyParticle("no atoms included")
    remap = -np.ones(cloud.n_atoms, dtype=np.int64)
    remap[included] = np.arange(included.size)

    keep = remap[edges.index[:, 0]] >= 0
    keep &= remap[edges.index[:, 1]] >= 0
    sub_index = remap[edges.index[keep]]
    sub_dist = edges.dist[keep]
    edge_index, edge_attr = _directed_edges(sub_index, sub_dist)

    positions = cloud.positions[included]
    symbols = cloud.symbols[included]
    x = _node_features(symbols)
    pos_frac = crystal.abs_to_frac(cell, positions)

    species = np.unique(x[:, 0].astype(np.int64))
    sysnum, sysname = crystal.crystal_system_of(cell.spacegroup_number)
    y = {
        "crystal_type": crystal_type,
        "space_group_symbol": cell.spacegroup_symbol,
        "space_group_number": cell.spacegroup_number,
        "crystal_system": sysname,
        "crystal_system_number": sysnum,
        "atomic_species": species,
        "n_atomic_species": int(species.size),
        "np_size": max_pairwise_distance(positions),
        "n_atoms": int(included.size),
        "n_bonds": int(edge_index.shape[1]),
        "cell_params": np.array(cell.lengths + cell.angles, dtype=np.float64),
    }
    y.update(cell_subgraph if cell_subgraph is not None else unit_cell_graph(cell))
    if curves:
        for kind_key, curve in curves.items():
            key = {"xpdf": "xPDF", "npdf": "nPDF"}.get(kind_key, kind_key)
            y[key] = curve.as_array()
    return NanoparticleGraph(x, edge_index, edge_attr, positions, pos_frac, y)


def isolated_node_count(graph: NanoparticleGraph) -> int:
    """Nodes without any edge; permitted (a cutout can isolate atoms) but
    counted into the dataset statistics."""
    n = graph.x.shape[0]
    if graph.edge_index.shape[1] == 0:
        return n
    return int(n - np.unique(graph.edge_index).size)


def validate_graph(graph: NanoparticleGraph):
    """Check the structural invariants every stored record must satisfy."""
    ei = graph.edge_index
    if ei.shape[1] != graph.edge_attr.shape[0]:
        raise InvariantViolation("edge_attr length != edge count")
    if ei.shape[1] % 2 != 0:
        raise InvariantViolation("n_bonds is odd")
    if ei.shape[1]:
        if (ei[0] == ei[1]).any():
            raise InvariantViolation("self loop present")
        fwd = np.lexsort((ei[1], ei[0]))
        rev = np.lexsort((ei[0], ei[1]))
        if not (np.array_equal(ei[0][fwd], ei[1][rev])
                and np.array_equal(ei[1][fwd], ei[0][rev])):
            raise InvariantViolation("edge_index not symmetric")
        d = np.linalg.norm(graph.pos_abs[ei[0]] - graph.pos_abs[ei[1]], axis=1)
        if np.abs(d - graph.edge_attr[:, 0]).max() > 1e-9:
            raise InvariantViolation("edge_attr inconsistent with positions")
    species = set(np.asarray(graph.y["atomic_species"]).tolist())
    if species != set(graph.x[:, 0].astype(np.int64).tolist()):
        raise InvariantViolation("atomic_species do not match node features")
    if graph.y["n_atoms"] != graph.x.shape[0]:
        raise InvariantViolation("n_atoms mismatch")
    if graph.y["n_bonds"] != ei.shape[1]:
        raise InvariantViolation("n_bonds mismatch")
