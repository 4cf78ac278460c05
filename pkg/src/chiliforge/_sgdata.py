"""Loader for the shipped 230-group symmetry-operation table.

Shared by the cif module (symbol/number resolution) and the crystal module
(operation lists); kept separate so neither has to import the other.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

_TOKEN = re.compile(r"([+-]?)\s*(\d+(?:/\d+)?|\d*\.\d+|[xyzXYZ])")


def parse_xyz_op(text):
    """Parse one 'x,y,z'-style operation into (3x3 int matrix, translation).

    Translations are returned as Fractions (decimals are snapped to twelfths
    or kept as exact Fractions of the literal).
    """
    rows = text.replace(" ", "").split(",")
    if len(rows) != 3:
        raise ValueError(f"malformed symmetry operation {text!r}")
    rot = np.zeros((3, 3), dtype=np.int64)
    trans = [Fraction(0)] * 3
    for i, row in enumerate(rows):
        consumed = 0
        for m in _TOKEN.finditer(row):
            consumed += len(m.group(0))
            sign = -1 if m.group(1) == "-" else 1
            tok = m.group(2)
            if tok in "xyzXYZ":
                rot[i, "xyz".index(tok.lower())] += sign
            elif "." in tok:
                trans[i] += sign * Fraction(tok).limit_denominator(24)
            else:
                trans[i] += sign * Fraction(tok)
        if consumed != len(row):
            raise ValueError(f"malformed symmetry operation {text!r}")
        trans[i] %= 1
    return rot, tuple(trans)


def ops_to_arrays(ops):
    """Stack [(rot, trans)] into (n,3,3) int and (n,3) float arrays."""
    rots = np.stack([r for r, _ in ops])
    trans = np.array([[float(t) for t in tr] for _, tr in ops])
    return rots, trans


def _normalize_symbol(sym):
    return sym.replace(" ", "").replace("_", "").upper()


@lru_cache(maxsize=1)
def load_table():
    """number -> (Hermann-Mauguin symbol, tuple of op strings)."""
    table = {}
    text = resources.files("chiliforge.data").joinpath("spacegroup_ops.txt").read_text()
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        num, hm, ops = line.split("|")
        table[int(num)] = (hm, tuple(ops.split(";")))
    if len(table) != 230:
        raise ValueError(f"spacegroup table has {len(table)} entries, expected 230")
    return table


@lru_cache(maxsize=1)
def symbol_index():
    """Space-insensitive Hermann-Mauguin symbol -> group number."""
    index = {}
    for num, (hm, _) in load_table().items():
        index.setdefault(_normalize_symbol(hm), num)
        # short monoclinic/triclinic aliases: drop the placeholder '1' axes
        parts = hm.split()
        if len(parts) == 4 and parts[1] == "1" and parts[3] == "1":
            short = f"{parts[0]} {parts[2]}"
            index.setdefault(_normalize_symbol(short), num)
    return index


def resolve_symbol(sym) -> int | None:
    cleaned = sym.strip().strip("'\"")
    cleaned = cleaned.split(":")[0]  # origin/setting suffixes
    return symbol_index().get(_normalize_symbol(cleaned))


def symbol_of(number: int) -> str:
    return load_table()[number][0]
