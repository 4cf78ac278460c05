"""Periodic-table constants and dataset element policies.

All per-element values used downstream (radii, weights, electron
affinities, metal flags, scattering amplitudes) come from the shipped
``data/elements.txt`` table; the two dataset policies come from the
``data/policy_*.txt`` allowlists. Everything is immutable after load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import MissingRadius, UnknownElement

INTERACTION_SCALE = 1.25  # interaction neighborhood = 125 % of the crystal radius


@dataclass(frozen=True)
class ElementRecord:
    symbol: str
    atomic_number: int
    slater_radius: float  # Angstrom; 0.0 when untabulated
    atomic_weight: float  # amu
    electron_affinity: float  # eV
    is_metal: bool
    neutron_length: float | None  # fm, coherent; None when untabulated
    xray_ff_coeffs: tuple[float, ...] | None  # a1..a4 b1..b4 c


@dataclass(frozen=True)
class ElementPolicy:
    name: str
    allowed_metals: frozenset[str]
    allowed_nonmetals: frozenset[str]

    def __post_init__(self):
        overlap = self.allowed_metals & self.allowed_nonmetals
        if overlap:
            raise ValueError(f"policy {self.name}: symbols in both lists: {sorted(overlap)}")

    @property
    def allowed(self) -> frozenset[str]:
        return self.allowed_metals | self.allowed_nonmetals


def _data_text(name):
    return resources.files("chiliforge.data").joinpath(name).read_text()


@lru_cache(maxsize=1)
def _table():
    by_symbol = {}
    by_number = {}
    for line in _data_text("elements.txt").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        f = line.split()
        ff = None if f[7] == "-" else tuple(float(x) for x in f[7:16])
        rec = ElementRecord(
            symbol=f[0],
            atomic_number=int(f[1]),
            slater_radius=0.0 if f[2] == "-" else float(f[2]),
            atomic_weight=float(f[3]),
            electron_affinity=float(f[4]),
            is_metal=f[5] == "1",
            neutron_length=None if f[6] == "-" else float(f[6]),
            xray_ff_coeffs=ff,
        )
        if rec.symbol in by_symbol or rec.atomic_number in by_number:
            raise ValueError(f"duplicate element entry {rec.symbol}")
        by_symbol[rec.symbol] = rec
        by_number[rec.atomic_number] = rec
    return by_symbol, by_number


def lookup(key) -> ElementRecord:
    """Find an element by symbol or atomic number."""
    by_symbol, by_number = _table()
    if isinstance(key, str):
        rec = by_symbol.get(key)
    elif isinstance(key, (int, np.integer)):
        rec = by_number.get(int(key))
    else:
        raise TypeError(f"element key must be str or int, got {type(key).__name__}")
    if rec is None:
        raise UnknownElement(repr(key))
    return rec


def known_symbol(symbol: str) -> bool:
    return symbol in _table()[0]


def interaction_radius(element) -> float:
    """Interaction-neighborhood radius: 125 % of the crystal atomic radius."""
    rec = element if isinstance(element, ElementRecord) else lookup(element)
    if rec.slater_radius <= 0.0:
        raise MissingRadius(rec.symbol)
    return INTERACTION_SCALE * rec.slater_radius


def xray_form_factor(element, q):
    """Four-Gaussian X-ray form factor f0(Q), Q in 1/Angstrom (scalar or array)."""
    rec = element if isinstance(element, ElementRecord) else lookup(element)
    if rec.xray_ff_coeffs is None:
        raise MissingRadius(rec.symbol)
    a = np.asarray(rec.xray_ff_coeffs[0:4])
    b = np.asarray(rec.xray_ff_coeffs[4:8])
    c = rec.xray_ff_coeffs[8]
    k2 = (np.asarray(q, dtype=float) / (4.0 * math.pi)) ** 2
    return np.sum(a * np.exp(-b * k2[..., None]), axis=-1) + c


def _parse_policy(name, text) -> ElementPolicy:
    metals, nonmetals = [], []
    bucket = None
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[metals]":
            bucket = metals
        elif line == "[nonmetals]":
            bucket = nonmetals
        elif bucket is None:
            raise ValueError(f"policy {name}: symbol {line!r} before any section header")
        else:
            bucket.append(line)
    return ElementPolicy(name, frozenset(metals), frozenset(nonmetals))


def load_policy(path) -> ElementPolicy:
    """Load a custom policy file (one symbol per line under [metals]/[nonmetals])."""
    with open(path, encoding="utf-8") as fh:
        return _parse_policy("custom", fh.read())


@lru_cache(maxsize=None)
def policy(name: str) -> ElementPolicy:
    """Shipped policy by name ('chili3k' or 'chili100k')."""
    if name not in ("chili3k", "chili100k"):
        raise ValueError(f"unknown shipped policy {name!r}")
    return _parse_policy(name, _data_text(f"policy_{name}.txt"))


def is_allowed(symbol: str, pol: ElementPolicy) -> bool:
    """True iff the symbol is on the policy's metal or non-metal allowlist."""
    return symbol in pol.allowed_metals or symbol in pol.allowed_nonmetals
