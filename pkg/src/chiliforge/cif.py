"""CIF parsing, repair, and unit-cell extraction.

The parser tokenizes CIF 1.1 text into an ordered item list without
validating chemistry. ``clean`` applies the repair rules in a fixed order,
logging every fix; files it cannot make sense of are rejected through the
report rather than raising. ``extract_unit_cell`` turns a cleaned document
into a UnitCell.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from . import _sgdata, elements
from .errors import CifSyntaxError, InvalidSpacegroup, MissingSection

# ---------------------------------------------------------------------------
# document model


@dataclass
class TagItem:
    tag: str
    value: str


@dataclass
class LoopTable:
    tags: list[str]
    rows: list[list[str]]


@dataclass
class CifDocument:
    items: list
    source_id: str = ""

    def get(self, tag):
        for item in self.items:
            if isinstance(item, TagItem) and item.tag.lower() == tag.lower():
                return item.value
        return None

    def first(self, *tags):
        for tag in tags:
            value = self.get(tag)
            if value is not None:
                return value
        return None

    def loops_with(self, tag):
        tag = tag.lower()
        for item in self.items:
            if isinstance(item, LoopTable) and any(t.lower() == tag for t in item.tags):
                yield item


REJECTION_REASONS = ("MissingSection", "UnfixableSyntax", "NoMetalInterpretable", "Other")


@dataclass
class CleanReport:
    fixes: list = field(default_factory=list)  # (rule-id, location, before, after)
    rejected: bool = False
    rejection_reason: str | None = None

    def log(self, rule, location, before, after):
        self.fixes.append((rule, location, before, after))

    def reject(self, reason):
        assert reason in REJECTION_REASONS
        self.rejected = True
        self.rejection_reason = reason

    def to_text(self):
        lines = [f"{r}\t{loc}\t{b}\t{a}" for r, loc, b, a in self.fixes]
        if self.rejected:
            lines.append(f"rejected\t{self.rejection_reason}\t\t")
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class Site:
    element: str
    frac: tuple[float, float, float]
    occupancy: float = 1.0


@dataclass(frozen=True)
class UnitCell:
    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float
    spacegroup_number: int
    spacegroup_symbol: str
    sites: tuple[Site, ...]
    symmetry_ops: tuple[str, ...] | None = None  # explicit xyz ops from the file
    source_id: str = ""

    @property
    def lengths(self):
        return (self.a, self.b, self.c)

    @property
    def angles(self):
        return (self.alpha, self.beta, self.gamma)


# ---------------------------------------------------------------------------
# parser


def _tokenize_line(line):
    """Split one physical line into CIF tokens (quotes stripped, # comments cut)."""
    tokens = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        if ch in "'\"":
            end = line.find(ch, i + 1)
            if end == -1:  # unterminated quote: take rest of line
                tokens.append(line[i + 1 :])
                break
            tokens.append(line[i + 1 : end])
            i = end + 1
            continue
        j = i
        while j < n and line[j] not in " \t":
            j += 1
        tokens.append(line[i:j])
        i = j
    return tokens


def parse(data: bytes, source_id: str = "") -> CifDocument:
    """Tokenize CIF bytes, preserving tag order and loop structure.

    Loop rows are kept one-per-physical-line and may be ragged; repairing
    them is clean()'s job. Raises CifSyntaxError with a byte offset for
    structurally unrecoverable input.
    """
    text = data.decode("utf-8", errors="replace")
    lines = text.split("\n")
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line.encode("utf-8", errors="replace")) + 1

    items = []
    i = 0
    nlines = len(lines)

    def read_semicolon_field(start):
        chunks = []
        k = start + 1
        while k < nlines:
            if lines[k].startswith(";"):
                return "\n".join(chunks), k + 1
            chunks.append(lines[k])
            k += 1
        raise CifSyntaxError("unterminated semicolon text field", offsets[start])

    while i < nlines:
        raw = lines[i]
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        if stripped.lower().startswith("data_"):
            items.append(TagItem("data_", stripped[5:]))
            i += 1
            continue
        if stripped.startswith(";"):
            raise CifSyntaxError("text field without a preceding tag", offsets[i])
        if stripped.lower().startswith("loop_"):
            loop_line = i
            i += 1
            tags = []
            while i < nlines:
                s = lines[i].strip()
                if s.startswith("_") and len(s.split()) == 1:
                    tags.append(s)
                    i += 1
                elif not s or s.startswith("#"):
                    i += 1
                    if not s and tags:
                        break  # blank line after headers may separate data
                else:
                    break
            if not tags:
                raise CifSyntaxError("loop_ without header tags", offsets[loop_line])
            rows = []
            while i < nlines:
                s = lines[i].strip()
                if not s or s.startswith("#"):
                    i += 1
                    if rows:
                        continue
                    else:
                        continue
                low = s.lower()
                if s.startswith("_") or low.startswith("loop_") or low.startswith("data_"):
                    break
                if s.startswith(";"):
                    value, nxt = read_semicolon_field(i)
                    if rows and len(rows[-1]) < len(tags):
                        rows[-1].append(value)
                    else:
                        rows.append([value])
                    i = nxt
                    continue
                rows.append(_tokenize_line(s))
                i += 1
            items.append(LoopTable(tags, rows))
            continue
        if stripped.startswith("_"):
            tokens = _tokenize_line(stripped)
            tag = tokens[0]
            if len(tokens) >= 2:
                items.append(TagItem(tag, " ".join(tokens[1:])))
                i += 1
                continue
            # value on the following line(s)
            i += 1
            while i < nlines and (not lines[i].strip() or lines[i].strip().startswith("#")):
                i += 1
            if i >= nlines:
                raise CifSyntaxError(f"tag {tag} without a value", offsets[i - 1])
            nxt = lines[i]
            if nxt.startswith(";"):
                value, i = read_semicolon_field(i)
                items.append(TagItem(tag, value))
            else:
                tokens = _tokenize_line(nxt.strip())
                if not tokens or tokens[0].startswith("_"):
                    raise CifSyntaxError(f"tag {tag} without a value", offsets[i])
                items.append(TagItem(tag, " ".join(tokens)))
                i += 1
            continue
        # bare tokens outside any loop: unrecoverable
        raise CifSyntaxError(f"unexpected token {stripped.split()[0]!r}", offsets[i])

    return CifDocument(items, source_id)


# ---------------------------------------------------------------------------
# cleaning rules

_UNCLOSED = re.compile(r"^([+-]?\d*\.?\d+)\((\d*)$")
_NUMERIC = re.compile(r"^([+-]?)(\d+)\.(\d+)(\(\d+\))?$")
_TWO_CAPS = re.compile(r"^([A-Z])([A-Z])([0-9'+\-]*.*)?$")

_FRACTION_DENOMS = (3, 6, 9, 12)
_FRACTION_TOL = 5e-5

_SITE_COORD_TAGS = ("_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z")
_SYMBOL_TAGS = ("_atom_site_type_symbol", "_atom_site_label")


def _match_special_fraction(value_text):
    """Return the 5-decimal rewrite for a short decimal sitting on k/3..k/12."""
    m = _NUMERIC.match(value_text)
    if not m:
        return None
    sign, intpart, decpart, suffix = m.groups()
    d = len(decpart)
    if d >= 5 or d == 0:
        return None
    v = float(f"{intpart}.{decpart}")
    best = None
    for denom in _FRACTION_DENOMS:
        k = round(v * denom)
        frac = Fraction(k, denom)
        fv = float(frac)
        rounded = round(fv, d)
        truncated = int(fv * 10**d) / 10**d
        if min(abs(v - rounded), abs(v - truncated)) <= _FRACTION_TOL:
            if best is None or abs(fv - v) < abs(best - v) - 1e-12:
                best = fv
    if best is None:
        return None
    out = f"{'-' if sign == '-' else ''}{best:.5f}"
    if out.lstrip("-") == f"{v:.5f}" and d == 5:
        return None
    return out + (suffix or "")


def _clean_loop(loop, loop_idx, report):
    ncols = len(loop.tags)
    loc = f"loop{loop_idx}[{loop.tags[0]}]"

    # rule 1: merge wrapped physical lines back into full-arity rows
    merged = []
    i = 0
    while i < len(loop.rows):
        row = loop.rows[i]
        if len(row) < ncols:
            combined = list(row)
            j = i + 1
            while j < len(loop.rows) and len(combined) < ncols:
                combined.extend(loop.rows[j])
                j += 1
            if len(combined) == ncols and j > i + 1:
                report.log("loop-arity", f"{loc}:row{len(merged)}",
                           " / ".join(" ".join(r) for r in loop.rows[i:j]),
                           " ".join(combined))
                merged.append(combined)
                i = j
                continue
        merged.append(list(row))
        i += 1
    loop.rows = merged

    # rule 2: pad remaining short rows with zeros (empty trailing columns)
    for r, row in enumerate(loop.rows):
        if len(row) < ncols:
            before = " ".join(row)
            row.extend(["0"] * (ncols - len(row)))
            report.log("zero-fill", f"{loc}:row{r}", before, " ".join(row))

    for r, row in enumerate(loop.rows):
        if len(row) > ncols:
            return False  # overlong row: no safe split
    return True


def clean(doc: CifDocument) -> tuple[CifDocument, CleanReport]:
    """Apply the repair rules in order and log every fix.

    Never raises: unfixable documents come back with report.rejected set.
    """
    report = CleanReport()
    out = CifDocument(
        [TagItem(i.tag, i.value) if isinstance(i, TagItem)
         else LoopTable(list(i.tags), [list(r) for r in i.rows])
         for i in doc.items],
        doc.source_id,
    )

    loop_idx = 0
    for item in out.items:
        if not isinstance(item, LoopTable):
            continue
        if not _clean_loop(item, loop_idx, report):
            report.reject("UnfixableSyntax")
            return out, report
        loop_idx += 1

    # rule 3: close unterminated uncertainty parentheses everywhere
    def fix_paren(text, location):
        m = _UNCLOSED.match(text)
        if m:
            fixed = text + ")"
            report.log("close-paren", location, text, fixed)
            return fixed
        return text

    for item in out.items:
        if isinstance(item, TagItem):
            item.value = fix_paren(item.value, f"tag[{item.tag}]")
        else:
            for r, row in enumerate(item.rows):
                for c, cell in enumerate(row):
                    row[c] = fix_paren(cell, f"loop[{item.tags[min(c, len(item.tags)-1)]}]:row{r}")

    # rule 4: five-decimal precision boost on special-fraction coordinates
    for item in out.items:
        if not isinstance(item, LoopTable):
            continue
        for c, tag in enumerate(item.tags):
            if tag.lower() not in _SITE_COORD_TAGS:
                continue
            for r, row in enumerate(item.rows):
                fixed = _match_special_fraction(row[c])
                if fixed is not None and fixed != row[c]:
                    report.log("frac-precision", f"loop[{tag}]:row{r}", row[c], fixed)
                    row[c] = fixed

    # rule 5: re-case fully capitalized two-letter element symbols
    for item in out.items:
        if not isinstance(item, LoopTable):
            continue
        for c, tag in enumerate(item.tags):
            if tag.lower() not in _SYMBOL_TAGS:
                continue
            for r, row in enumerate(item.rows):
                m = _TWO_CAPS.match(row[c])
                if not m:
                    continue
                candidate = m.group(1) + m.group(2).lower()
                if elements.known_symbol(candidate):
                    fixed = candidate + (m.group(3) or "")
                    report.log("symbol-case", f"loop[{tag}]:row{r}", row[c], fixed)
                    row[c] = fixed

    # rule 6: reject documents that are missing sections or have no
    # interpretable metallic element
    missing = _missing_sections(out)
    if missing:
        report.reject("MissingSection")
        return out, report
    symbols = _site_symbols(out)
    if not any(elements.known_symbol(s) and elements.lookup(s).is_metal for s in symbols):
        report.reject("NoMetalInterpretable")
    return out, report


def _missing_sections(doc):
    missing = []
    for tag in ("_cell_length_a", "_cell_length_b", "_cell_length_c",
                "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma"):
        if doc.get(tag) is None:
            missing.append(tag)
    if not any(True for _ in doc.loops_with("_atom_site_fract_x")):
        missing.append("_atom_site_fract_x")
    return missing


_ELEMENT_PREFIX = re.compile(r"^([A-Za-z]{1,2})")


def _element_from_token(token):
    """Interpret a type_symbol or label token as an element symbol."""
    m = _ELEMENT_PREFIX.match(token.strip())
    if not m:
        return None
    prefix = m.group(1)
    for cand in (prefix[:2].capitalize(), prefix[:1].upper()):
        if elements.known_symbol(cand):
            return cand
    return None


def _site_symbols(doc):
    symbols = []
    for loop in doc.loops_with("_atom_site_fract_x"):
        cols = {t.lower(): k for k, t in enumerate(loop.tags)}
        col = cols.get("_atom_site_type_symbol", cols.get("_atom_site_label"))
        if col is None:
            continue
        for row in loop.rows:
            if col < len(row):
                sym = _element_from_token(row[col])
                if sym:
                    symbols.append(sym)
    return symbols


# ---------------------------------------------------------------------------
# extraction

_PAREN_SUFFIX = re.compile(r"\(\d*\)?\s*$")


def strip_uncertainty(text) -> float:
    """'5.431(2)' -> 5.431"""
    return float(_PAREN_SUFFIX.sub("", text.strip()))


def wrap_frac(x: float) -> float:
    w = x % 1.0
    return 0.0 if w == 1.0 else w


def _require(doc, tag):
    value = doc.get(tag)
    if value is None:
        raise MissingSection(tag)
    try:
        return strip_uncertainty(value)
    except ValueError:
        raise MissingSection(f"{tag} (unreadable value {value!r})") from None


def extract_unit_cell(doc: CifDocument) -> UnitCell:
    """Build a UnitCell from a cleaned document."""
    a = _require(doc, "_cell_length_a")
    b = _require(doc, "_cell_length_b")
    c = _require(doc, "_cell_length_c")
    alpha = _require(doc, "_cell_angle_alpha")
    beta = _require(doc, "_cell_angle_beta")
    gamma = _require(doc, "_cell_angle_gamma")
    if min(a, b, c) <= 0 or not all(0 < ang < 180 for ang in (alpha, beta, gamma)):
        raise MissingSection("cell parameters out of range")

    number = None
    number_text = doc.first("_space_group_IT_number", "_symmetry_Int_Tables_number")
    if number_text is not None:
        try:
            number = int(float(strip_uncertainty(number_text)))
        except ValueError:
            number = None
    symbol_text = doc.first("_space_group_name_H-M_alt", "_symmetry_space_group_name_H-M",
                            "_space_group_name_H-M")
    if number is None and symbol_text is not None:
        number = _sgdata.resolve_symbol(symbol_text)
    if number is None or not 1 <= number <= 230:
        raise InvalidSpacegroup(f"number={number_text!r} symbol={symbol_text!r}")
    if symbol_text is not None and _sgdata.resolve_symbol(symbol_text) not in (None, number):
        raise InvalidSpacegroup(
            f"symbol {symbol_text!r} names group {_sgdata.resolve_symbol(symbol_text)}, "
            f"file says {number}")
    symbol = _sgdata.symbol_of(number)

    sites = []
    for loop in doc.loops_with("_atom_site_fract_x"):
        cols = {t.lower(): k for k, t in enumerate(loop.tags)}
        xs, ys, zs = (cols[t] for t in _SITE_COORD_TAGS)
        sym_col = cols.get("_atom_site_type_symbol", cols.get("_atom_site_label"))
        occ_col = cols.get("_atom_site_occupancy")
        for row in loop.rows:
            element = _element_from_token(row[sym_col]) if sym_col is not None else None
            if element is None:
                continue
            frac = tuple(wrap_frac(strip_uncertainty(row[k])) for k in (xs, ys, zs))
            occ = 1.0
            if occ_col is not None and occ_col < len(row):
                try:
                    occ = min(strip_uncertainty(row[occ_col]), 1.0)
                except ValueError:
                    occ = 1.0
            if occ <= 0:
                continue
            sites.append(Site(element, frac, occ))
        break  # first site loop only
    if not sites:
        raise MissingSection("_atom_site loop has no interpretable sites")

    ops = None
    for tag in ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"):
        for loop in doc.loops_with(tag):
            cols = {t.lower(): k for k, t in enumerate(loop.tags)}
            col = cols[tag]
            parsed = []
            for row in loop.rows:
                if col < len(row):
                    parsed.append(row[col])
            if parsed:
                ops = tuple(parsed)
            break
        if ops:
            break

    return UnitCell(a, b, c, alpha, beta, gamma, number, symbol,
                    tuple(sites), ops, doc.source_id)


def cell_volume(cell: UnitCell) -> float:
    """Triclinic closed-form cell volume in cubic Angstrom."""
    import math

    ca, cb, cg = (math.cos(math.radians(x)) for x in cell.angles)
    arg = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
    return cell.a * cell.b * cell.c * math.sqrt(max(arg, 0.0))


def write_clean_cif(doc: CifDocument) -> bytes:
    """Serialize a document deterministically (used for cleaned-file output)."""
    lines = []
    for item in doc.items:
        if isinstance(item, TagItem):
            if item.tag == "data_":
                lines.append(f"data_{item.value}")
            else:
                value = item.value
                if value == "" or " " in value or "\t" in value:
                    value = f"'{value}'"
                lines.append(f"{item.tag} {value}")
        else:
            lines.append("loop_")
            lines.extend(f" {t}" for t in item.tags)
            for row in item.rows:
                lines.append(" ".join(
                    f"'{cell}'" if (cell == "" or " " in cell) else cell for cell in row))
    return ("\n".join(lines) + "\n").encode()
