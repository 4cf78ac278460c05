import numpy as np
import pytest

from chiliforge import elements
from chiliforge.errors import MissingRadius, UnknownElement


def test_lookup_by_symbol_and_number():
    assert elements.lookup("O").atomic_number == 8
    assert elements.lookup(29).symbol == "Cu"


def test_lookup_unknown():
    with pytest.raises(UnknownElement):
        elements.lookup("Xx")
    with pytest.raises(UnknownElement):
        elements.lookup(119)


def test_symbols_unique_and_numbers_unique():
    by_symbol, by_number = elements._table()
    assert len(by_symbol) == len(by_number)
    assert all(by_number[r.atomic_number] is r for r in by_symbol.values())


def test_slater_radius_cu():
    # cross-checked against the Slater 1964 table before shipping
    assert elements.lookup("Cu").slater_radius == pytest.approx(1.35)


def test_interaction_radius_scaling():
    assert elements.interaction_radius("Cu") == pytest.approx(1.25 * 1.35)
    assert elements.interaction_radius("O") == pytest.approx(0.75)


def test_interaction_radius_missing():
    assert elements.lookup("He").slater_radius == 0.0
    with pytest.raises(MissingRadius):
        elements.interaction_radius("He")


def test_policy_cardinalities():
    p3 = elements.policy("chili3k")
    assert len(p3.allowed_metals) == 53
    assert p3.allowed_nonmetals == frozenset({"O"})
    p100 = elements.policy("chili100k")
    assert len(p100.allowed_metals) == 68
    assert len(p100.allowed_nonmetals) == 11


def test_policy_disjoint_and_consistent_flags():
    for name in ("chili3k", "chili100k"):
        p = elements.policy(name)
        assert not p.allowed_metals & p.allowed_nonmetals
        for s in p.allowed_metals:
            assert elements.lookup(s).is_metal, s
        for s in p.allowed_nonmetals:
            assert not elements.lookup(s).is_metal, s


def test_is_allowed():
    p3 = elements.policy("chili3k")
    assert elements.is_allowed("O", p3)
    assert elements.is_allowed("Cu", p3)
    assert not elements.is_allowed("He", elements.policy("chili100k"))
    assert not elements.is_allowed("Xx", p3)  # unknown symbols are just not allowed


def test_policy_elements_have_radius():
    for name in ("chili3k", "chili100k"):
        for s in elements.policy(name).allowed:
            assert elements.interaction_radius(s) > 0.0


def test_form_factor_f0_matches_z():
    by_symbol, _ = elements._table()
    for rec in by_symbol.values():
        if rec.xray_ff_coeffs is None:
            continue
        f0 = elements.xray_form_factor(rec, 0.0)
        assert abs(f0 - rec.atomic_number) <= 0.01 * rec.atomic_number, rec.symbol


def test_form_factor_monotone_decay():
    q = np.arange(0.0, 30.0 + 1e-9, 0.05)
    by_symbol, _ = elements._table()
    for rec in by_symbol.values():
        if rec.xray_ff_coeffs is None:
            continue
        f = elements.xray_form_factor(rec, q)
        assert np.all(np.diff(f) <= 1e-12), rec.symbol


def test_load_policy_roundtrip(tmp_path):
    p = tmp_path / "pol.txt"
    p.write_text("# demo\n[metals]\nCu\nFe\n[nonmetals]\nO\n")
    pol = elements.load_policy(p)
    assert pol.allowed_metals == frozenset({"Cu", "Fe"})
    assert pol.allowed_nonmetals == frozenset({"O"})
