"""Spacegroup symmetry expansion, lattice transforms, and crystal-type templates.

The 230-group operation table ships as a plain-text data file; expansion
prefers explicit operator loops carried by a CIF (COD files in non-default
settings) and falls back to the table. Templates instantiate the bundled
crystal types for a concrete (metal, oxygen) pair via linear cell-parameter
models in the summed Slater radii.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from . import _sgdata, elements
from .cif import Site, UnitCell
from .errors import DegenerateFit, InvalidSpacegroup, SymmetryClash

DEDUP_TOL = 1e-3  # fractional min-image distance below which sites coincide

CRYSTAL_SYSTEMS = (
    (2, "triclinic"),
    (15, "monoclinic"),
    (74, "orthorhombic"),
    (142, "tetragonal"),
    (167, "trigonal"),
    (194, "hexagonal"),
    (230, "cubic"),
)


def crystal_system_of(number: int) -> tuple[int, str]:
    """Map a spacegroup number onto (system index 1..7, system name)."""
    if not isinstance(number, (int, np.integer)) or not 1 <= number <= 230:
        raise InvalidSpacegroup(repr(number))
    for idx, (upper, name) in enumerate(CRYSTAL_SYSTEMS, start=1):
        if number <= upper:
            return idx, name
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# spacegroup table


@dataclass(frozen=True)
class Spacegroup:
    number: int
    symbol: str
    rotations: np.ndarray  # (n, 3, 3) int
    translations: np.ndarray  # (n, 3) float


_CLOSURE_SAMPLE = (1, 14, 62, 136, 167, 194, 225, 227)


def _check_closure(group):
    ops = {(tuple(r.ravel()), tuple(np.round(t % 1.0, 6)))
           for r, t in zip(group.rotations, group.translations)}
    for r1, t1 in zip(group.rotations, group.translations):
        for r2, t2 in zip(group.rotations, group.translations):
            rot = r1 @ r2
            trans = np.round((r1 @ t2 + t1) % 1.0, 6) % 1.0
            if (tuple(rot.ravel()), tuple(trans)) not in ops:
                raise ValueError(f"group {group.number} not closed under composition")


class SpacegroupTable:
    """All 230 groups in their default settings, loaded once.

    Closure under composition (mod lattice translations) is verified for a
    fixed sample of groups at load time.
    """

    def __init__(self, raw):
        self._groups = {}
        for number, (symbol, op_strings) in raw.items():
            ops = [_sgdata.parse_xyz_op(s) for s in op_strings]
            rot, trans = _sgdata.ops_to_arrays(ops)
            self._groups[number] = Spacegroup(number, symbol, rot, trans)
        for number in _CLOSURE_SAMPLE:
            _check_closure(self._groups[number])

    def __getitem__(self, number: int) -> Spacegroup:
        try:
            return self._groups[number]
        except KeyError:
            raise InvalidSpacegroup(repr(number)) from None

    def __len__(self):
        return len(self._groups)


@lru_cache(maxsize=1)
def spacegroup_table() -> SpacegroupTable:
    return SpacegroupTable(_sgdata.load_table())


# ---------------------------------------------------------------------------
# lattice transforms


def lattice_matrix(cell) -> np.ndarray:
    """Rows are the lattice vectors a, b, c; a along x, b in the xy plane."""
    a, b, c = cell.lengths
    ca, cb, cg = (math.cos(math.radians(x)) for x in cell.angles)
    sg = math.sin(math.radians(cell.gamma))
    cx = c * cb
    cy = c * (ca - cb * cg) / sg
    cz_sq = c * c - cx * cx - cy * cy
    cz = math.sqrt(max(cz_sq, 0.0))
    return np.array([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [cx, cy, cz],
    ])


def frac_to_abs(cell, frac):
    """Fractional triple(s) -> absolute Angstrom coordinates."""
    return np.asarray(frac, dtype=float) @ lattice_matrix(cell)


def abs_to_frac(cell, pos):
    return np.asarray(pos, dtype=float) @ np.linalg.inv(lattice_matrix(cell))


# ---------------------------------------------------------------------------
# symmetry expansion


def _apply_ops(rotations, translations, frac):
    out = rotations @ np.asarray(frac, dtype=float) + translations
    out %= 1.0
    out[out >= 1.0 - 1e-12] = 0.0
    return out


def _match_existing(positions, img, tol):
    """Index of the first stored position within min-image tol, else None."""
    if not positions:
        return None
    d = np.abs(np.asarray(positions) - img)
    d = np.minimum(d, 1.0 - d)
    hits = np.nonzero((d * d).sum(axis=1) < tol * tol)[0]
    return int(hits[0]) if hits.size else None


def expand_symmetry(cell: UnitCell, table: SpacegroupTable | None = None) -> UnitCell:
    """Apply every group operation to every site and deduplicate.

    Explicit operator strings carried by the cell (from the CIF) win over
    the shipped table, which keeps non-default COD settings intact.
    Expansion is idempotent. Two fully occupied distinct elements on one
    deduplicated position raise SymmetryClash; partially occupied overlaps
    resolve to the higher-occupancy species.
    """
    if cell.symmetry_ops:
        ops = [_sgdata.parse_xyz_op(s) for s in cell.symmetry_ops]
        rotations, translations = _sgdata.ops_to_arrays(ops)
    else:
        group = (table or spacegroup_table())[cell.spacegroup_number]
        rotations, translations = group.rotations, group.translations

    new_sites = []
    positions = []
    for site in cell.sites:
        images = _apply_ops(rotations, translations, site.frac)
        order = np.lexsort((images[:, 2], images[:, 1], images[:, 0]))
        for img in images[order]:
            k = _match_existing(positions, img, DEDUP_TOL)
            if k is None:
                positions.append(img)
                new_sites.append(Site(site.element, tuple(img), site.occupancy))
                continue
            other = new_sites[k]
            if other.element == site.element:
                continue
            if other.occupancy >= 1.0 and site.occupancy >= 1.0:
                raise SymmetryClash(
                    f"{other.element} and {site.element} both at {tuple(img)}")
            if site.occupancy > other.occupancy:
                new_sites[k] = Site(site.element, other.frac, site.occupancy)
    return replace(cell, sites=tuple(new_sites))


# ---------------------------------------------------------------------------
# cell-parameter fits


def fit_cell_params(observations) -> dict[str, tuple[float, float]]:
    """Least-squares (slope, intercept) per cell parameter.

    observations: iterable of (radius_sum, {param: value}). Parameters fixed
    by symmetry are simply absent from the mapping.
    """
    per_param = {}
    for rsum, params in observations:
        for name, value in params.items():
            per_param.setdefault(name, ([], []))
            per_param[name][0].append(float(rsum))
            per_param[name][1].append(float(value))
    coeffs = {}
    for name, (xs, ys) in per_param.items():
        if len(xs) < 2:
            raise DegenerateFit(f"{name}: {len(xs)} observation(s)")
        x = np.array(xs)
        y = np.array(ys)
        if np.ptp(x) == 0.0:
            raise DegenerateFit(f"{name}: zero regressor variance")
        slope, intercept = np.polyfit(x, y, 1)
        coeffs[name] = (float(slope), float(intercept))
    return coeffs


def load_observations(path=None):
    """(template name, radius_sum, {param: value}) rows from the bundled file."""
    if path is None:
        text = resources.files("chiliforge.data").joinpath("cell_observations.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, elems, params = (part.strip() for part in line.split("|"))
        rsum = sum(elements.lookup(s).slater_radius for s in elems.split())
        values = {}
        for kv in params.split():
            k, v = kv.split("=")
            values[k] = float(v)
        rows.append((name, rsum, values))
    return rows


# ---------------------------------------------------------------------------
# crystal-type templates

SYSTEM_FREE_PARAMS = {
    "cubic": ("a",),
    "tetragonal": ("a", "c"),
    "hexagonal": ("a", "c"),
    "trigonal": ("a", "c"),  # hexagonal-axes setting
}


@dataclass(frozen=True)
class CrystalTypeTemplate:
    name: str
    spacegroup_number: int
    system: str
    sites: tuple[tuple[str, tuple[float, float, float]], ...]  # (role, frac)
    fit_coeffs: dict  # param -> (slope, intercept)

    def __post_init__(self):
        roles = {role for role, _ in self.sites}
        if "metal" not in roles or "oxygen" not in roles:
            raise ValueError(f"template {self.name}: needs metal and oxygen sites")
        for param in SYSTEM_FREE_PARAMS[self.system]:
            if param not in self.fit_coeffs:
                raise ValueError(f"template {self.name}: no fit for {param}")


def load_templates(path=None) -> tuple[CrystalTypeTemplate, ...]:
    if path is None:
        text = resources.files("chiliforge.data").joinpath("templates.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    templates = []
    current = None

    def finish():
        if current:
            templates.append(CrystalTypeTemplate(
                current["name"], current["spacegroup"], current["system"],
                tuple(current["sites"]), current["fits"]))

    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[template]":
            finish()
            current = {"sites": [], "fits": {}}
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "name":
            current["name"] = value
        elif key == "spacegroup":
            current["spacegroup"] = int(value)
        elif key == "system":
            current["system"] = value
        elif key.startswith("fit "):
            slope, intercept = (float(x) for x in value.split())
            current["fits"][key.split()[1]] = (slope, intercept)
        elif key == "site":
            role, x, y, z = value.split()
            current["sites"].append((role, (float(x), float(y), float(z))))
    finish()
    return tuple(templates)


def _cell_params_for(template, radius_sum):
    evaluated = {}
    for param in SYSTEM_FREE_PARAMS[template.system]:
        slope, intercept = template.fit_coeffs[param]
        evaluated[param] = slope * radius_sum + intercept
    a = evaluated["a"]
    if template.system == "cubic":
        return a, a, a, 90.0, 90.0, 90.0
    c = evaluated["c"]
    if template.system == "tetragonal":
        return a, a, c, 90.0, 90.0, 90.0
    return a, a, c, 90.0, 90.0, 120.0  # hexagonal / trigonal (hex axes)


def instantiate_template(template: CrystalTypeTemplate,
                         metal: elements.ElementRecord,
                         oxygen: elements.ElementRecord | None = None) -> UnitCell:
    """Concrete, symmetry-expanded unit cell for one (template, metal) pair."""
    oxygen = oxygen or elements.lookup("O")
    if not metal.is_metal:
        raise ValueError(f"{metal.symbol} is not flagged metallic")
    for rec in (metal, oxygen):
        elements.interaction_radius(rec)  # MissingRadius propagates
    radius_sum = metal.slater_radius + oxygen.slater_radius
    a, b, c, alpha, beta, gamma = _cell_params_for(template, radius_sum)
    sites = tuple(
        Site(metal.symbol if role == "metal" else oxygen.symbol, frac)
        for role, frac in template.sites)
    seed = UnitCell(a, b, c, alpha, beta, gamma,
                    template.spacegroup_number,
                    _sgdata.symbol_of(template.spacegroup_number),
                    sites, None,
                    source_id=f"{template.name}:{metal.symbol}")
    expanded = expand_symmetry(seed)
    # carry the identity op so the emitted CIF re-expands to exactly these atoms
    return replace(expanded, symmetry_ops=("x, y, z",))


# ---------------------------------------------------------------------------
# CIF writing


def _fmt(value):
    return f"{value:.5f}"


def write_cif(cell: UnitCell, structure_type=None) -> bytes:
    """Deterministic CIF bytes readable by chiliforge.cif.parse."""
    name = re.sub(r"[^A-Za-z0-9]+", "_", cell.source_id) or "cell"
    lines = [
        f"data_{name}",
        f"_cell_length_a {_fmt(cell.a)}",
        f"_cell_length_b {_fmt(cell.b)}",
        f"_cell_length_c {_fmt(cell.c)}",
        f"_cell_angle_alpha {_fmt(cell.alpha)}",
        f"_cell_angle_beta {_fmt(cell.beta)}",
        f"_cell_angle_gamma {_fmt(cell.gamma)}",
        f"_symmetry_space_group_name_H-M '{cell.spacegroup_symbol}'",
        f"_symmetry_Int_Tables_number {cell.spacegroup_number}",
    ]
    if structure_type:
        lines.append(f"_chemical_name_structure_type '{structure_type}'")
    lines += [
        "loop_",
        " _symmetry_equiv_pos_as_xyz",
    ]
    for op in cell.symmetry_ops or ("x, y, z",):
        lines.append(f"'{op}'")
    lines += [
        "loop_",
        " _atom_site_label",
        " _atom_site_type_symbol",
        " _atom_site_fract_x",
        " _atom_site_fract_y",
        " _atom_site_fract_z",
        " _atom_site_occupancy",
    ]
    counters = {}
    for site in cell.sites:
        counters[site.element] = counters.get(site.element, 0) + 1
        label = f"{site.element}{counters[site.element]}"
        x, y, z = (_fmt(v) for v in site.frac)
        lines.append(f"{label} {site.element} {x} {y} {z} {_fmt(site.occupancy)}")
    return ("\n".join(lines) + "\n").encode()
