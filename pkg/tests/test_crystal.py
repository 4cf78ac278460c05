import math
from fractions import Fraction

import numpy as np
import pytest

from chiliforge import _sgdata, cif, crystal, elements
from chiliforge.cif import Site, UnitCell
from chiliforge.errors import DegenerateFit, InvalidSpacegroup, MissingRadius, SymmetryClash


def p1_cell(sites, a=4.0):
    return UnitCell(a, a, a, 90, 90, 90, 1, "P 1", tuple(sites))


def brute_force_orbit(group_number, site, tol=1e-3):
    """Independent oracle: exact-fraction application of every tabulated op,
    then greedy clustering at the contractual min-image tolerance."""
    _, op_strings = _sgdata.load_table()[group_number]
    frac = tuple(Fraction(x).limit_denominator(10**6) for x in site)
    points = set()
    for s in op_strings:
        rot, trans = _sgdata.parse_xyz_op(s)
        img = tuple(
            (sum(Fraction(int(rot[i, j])) * frac[j] for j in range(3)) + trans[i]) % 1
            for i in range(3))
        points.add(img)
    clusters = []
    for p in sorted(points):
        pf = [float(x) for x in p]
        for q in clusters:
            d2 = 0.0
            for a, b in zip(pf, q):
                d = abs(a - b)
                d = min(d, 1.0 - d)
                d2 += d * d
            if math.sqrt(d2) < tol:
                break
        else:
            clusters.append(pf)
    return clusters


class TestSpacegroupTable:
    def test_full_coverage(self):
        assert len(crystal.spacegroup_table()) == 230

    def test_symbols(self):
        table = crystal.spacegroup_table()
        assert table[225].symbol == "F m -3 m"
        assert table[1].symbol == "P 1"

    def test_invalid_number(self):
        with pytest.raises(InvalidSpacegroup):
            crystal.spacegroup_table()[0]

    def test_identity_present_everywhere(self):
        table = crystal.spacegroup_table()
        eye = np.eye(3, dtype=np.int64)
        for number in range(1, 231):
            g = table[number]
            hit = np.all(g.rotations == eye, axis=(1, 2)) & np.all(
                np.isclose(g.translations % 1.0, 0.0), axis=1)
            assert hit.any(), number


class TestExpandSymmetry:
    def test_p1_unchanged(self):
        cell = p1_cell([Site("Cu", (0.1, 0.2, 0.3)), Site("O", (0.4, 0.5, 0.6))])
        out = crystal.expand_symmetry(cell)
        assert len(out.sites) == 2

    def test_fm3m_metal_plus_edge_oxygen(self):
        # brute-force oracle: apply all 192 ops exactly and deduplicate
        assert len(brute_force_orbit(225, (0, 0, 0))) == 4
        assert len(brute_force_orbit(225, (0.5, 0, 0))) == 4
        cell = UnitCell(4.2, 4.2, 4.2, 90, 90, 90, 225, "F m -3 m",
                        (Site("Mg", (0, 0, 0)), Site("O", (0.5, 0, 0))))
        out = crystal.expand_symmetry(cell)
        assert sum(s.element == "Mg" for s in out.sites) == 4
        assert sum(s.element == "O" for s in out.sites) == 4

    def test_clash_on_coincident_distinct_elements(self):
        cell = UnitCell(4, 4, 4, 90, 90, 90, 225, "F m -3 m",
                        (Site("Mg", (0, 0, 0)), Site("O", (0, 0, 0))))
        with pytest.raises(SymmetryClash):
            crystal.expand_symmetry(cell)

    def test_partial_occupancy_keeps_majority_species(self):
        cell = UnitCell(4, 4, 4, 90, 90, 90, 1, "P 1",
                        (Site("Fe", (0, 0, 0), 0.3), Site("Ni", (0, 0, 0), 0.7)))
        out = crystal.expand_symmetry(cell)
        assert len(out.sites) == 1
        assert out.sites[0].element == "Ni"

    def test_idempotent(self):
        cell = UnitCell(4.2, 4.2, 4.2, 90, 90, 90, 225, "F m -3 m",
                        (Site("Mg", (0, 0, 0)), Site("O", (0.5, 0.5, 0.5))))
        once = crystal.expand_symmetry(cell)
        twice = crystal.expand_symmetry(once)
        assert len(twice.sites) == len(once.sites)

    def test_explicit_ops_override_table(self):
        # file claims 225 but carries only the identity: nothing is added
        cell = UnitCell(4.2, 4.2, 4.2, 90, 90, 90, 225, "F m -3 m",
                        (Site("Mg", (0, 0, 0)),), symmetry_ops=("x, y, z",))
        assert len(crystal.expand_symmetry(cell).sites) == 1

    def test_orbit_sizes_match_brute_force_for_all_templates(self):
        for t in crystal.load_templates():
            cell = crystal.instantiate_template(t, elements.lookup("Cu"))
            points = []
            for role, frac in t.sites:
                points.extend(brute_force_orbit(t.spacegroup_number, frac))
            clusters = []
            for pf in points:
                for q in clusters:
                    d2 = sum(min(abs(a - b), 1 - abs(a - b)) ** 2
                             for a, b in zip(pf, q))
                    if math.sqrt(d2) < 1e-3:
                        break
                else:
                    clusters.append(pf)
            assert len(cell.sites) == len(clusters), t.name


class TestFracToAbs:
    def test_cubic(self):
        cell = p1_cell([Site("Cu", (0, 0, 0))], a=4.0)
        assert crystal.frac_to_abs(cell, (0.5, 0.5, 0.5)) == pytest.approx([2, 2, 2])

    def test_orthorhombic(self):
        cell = UnitCell(3, 4, 5, 90, 90, 90, 1, "P 1", (Site("Cu", (0, 0, 0)),))
        assert crystal.frac_to_abs(cell, (1, 1, 1)) == pytest.approx([3, 4, 5])

    def test_hexagonal_against_hand_built_matrix(self):
        cell = UnitCell(3, 3, 5, 90, 90, 120, 1, "P 1", (Site("Cu", (0, 0, 0)),))
        assert crystal.frac_to_abs(cell, (1, 0, 0)) == pytest.approx([3, 0, 0])
        assert crystal.frac_to_abs(cell, (0, 1, 0)) == pytest.approx(
            [-1.5, 3 * math.sin(math.radians(120)), 0])
        assert crystal.frac_to_abs(cell, (0, 1, 0)) == pytest.approx(
            [-1.5, 2.59807621, 0])

    def test_abs_to_frac_inverse(self):
        cell = UnitCell(3.1, 4.2, 5.3, 88, 95, 118, 1, "P 1", (Site("Cu", (0, 0, 0)),))
        rng = np.random.default_rng(7)
        frac = rng.random((20, 3))
        back = crystal.abs_to_frac(cell, crystal.frac_to_abs(cell, frac))
        assert np.allclose(back, frac, atol=1e-12)


class TestCrystalSystemOf:
    @pytest.mark.parametrize("number,expect", [
        (1, (1, "triclinic")), (2, (1, "triclinic")),
        (3, (2, "monoclinic")), (15, (2, "monoclinic")),
        (16, (3, "orthorhombic")), (74, (3, "orthorhombic")),
        (75, (4, "tetragonal")), (142, (4, "tetragonal")),
        (143, (5, "trigonal")), (167, (5, "trigonal")),
        (168, (6, "hexagonal")), (194, (6, "hexagonal")),
        (195, (7, "cubic")), (225, (7, "cubic")), (230, (7, "cubic")),
    ])
    def test_ranges(self, number, expect):
        assert crystal.crystal_system_of(number) == expect

    def test_partition_is_exact(self):
        names = [crystal.crystal_system_of(n)[0] for n in range(1, 231)]
        assert sorted(set(names)) == [1, 2, 3, 4, 5, 6, 7]
        assert names == sorted(names)  # monotone over group number

    @pytest.mark.parametrize("bad", [0, 231, -5])
    def test_out_of_range(self, bad):
        with pytest.raises(InvalidSpacegroup):
            crystal.crystal_system_of(bad)


class TestFitCellParams:
    def test_two_point_line(self):
        coeffs = crystal.fit_cell_params([(2.0, {"a": 4.0}), (3.0, {"a": 5.0})])
        slope, intercept = coeffs["a"]
        assert slope == pytest.approx(1.0)
        assert intercept == pytest.approx(2.0)

    def test_collinear_matches_two_point(self):
        two = crystal.fit_cell_params([(2.0, {"a": 4.0}), (3.0, {"a": 5.0})])
        three = crystal.fit_cell_params(
            [(2.0, {"a": 4.0}), (2.5, {"a": 4.5}), (3.0, {"a": 5.0})])
        assert three["a"] == pytest.approx(two["a"])

    def test_degenerate(self):
        with pytest.raises(DegenerateFit):
            crystal.fit_cell_params([(2.0, {"a": 4.0}), (2.0, {"a": 4.2})])

    def test_bundled_observations_refit(self):
        rows = crystal.load_observations()
        by_template = {}
        for name, rsum, params in rows:
            by_template.setdefault(name, []).append((rsum, params))
        assert len(by_template) == 12
        for name, obs in by_template.items():
            coeffs = crystal.fit_cell_params(obs)
            assert "a" in coeffs, name


class TestInstantiateTemplate:
    def test_linear_evaluation(self):
        t = crystal.CrystalTypeTemplate(
            "demo", 225, "cubic",
            (("metal", (0, 0, 0)), ("oxygen", (0.5, 0.5, 0.5))),
            {"a": (1.0, 2.0)})
        cell = crystal.instantiate_template(t, elements.lookup("Cu"))
        assert cell.a == pytest.approx(1.0 * 1.95 + 2.0)  # Cu 1.35 + O 0.60

    def test_deterministic(self):
        t = crystal.load_templates()[0]
        one = crystal.instantiate_template(t, elements.lookup("Cu"))
        two = crystal.instantiate_template(t, elements.lookup("Cu"))
        assert one == two

    def test_all_combinations_count(self):
        templates = crystal.load_templates()
        metals = sorted(elements.policy("chili3k").allowed_metals)
        assert len(templates) * len(metals) == 636

    def test_lattice_constraints(self):
        cu = elements.lookup("Cu")
        for t in crystal.load_templates():
            cell = crystal.instantiate_template(t, cu)
            if t.system == "cubic":
                assert cell.a == cell.b == cell.c
                assert cell.angles == (90, 90, 90)
            elif t.system == "tetragonal":
                assert cell.a == cell.b != cell.c
                assert cell.angles == (90, 90, 90)
            else:
                assert cell.a == cell.b
                assert cell.angles == (90, 90, 120)

    def test_nonmetal_refused(self):
        t = crystal.load_templates()[0]
        with pytest.raises(ValueError):
            crystal.instantiate_template(t, elements.lookup("O"))

    def test_missing_radius_propagates(self):
        t = crystal.load_templates()[0]
        with pytest.raises(MissingRadius):
            crystal.instantiate_template(t, elements.lookup("Fr"))


class TestWriteCif:
    def test_roundtrip_all_templates(self):
        cu = elements.lookup("Cu")
        for t in crystal.load_templates():
            cell = crystal.instantiate_template(t, cu)
            doc, report = cif.clean(cif.parse(crystal.write_cif(cell)))
            assert not report.rejected and not report.fixes, (t.name, report.fixes)
            back = cif.extract_unit_cell(doc)
            for got, want in zip(back.lengths + back.angles, cell.lengths + cell.angles):
                assert abs(got - want) <= 1e-5
            assert len(back.sites) == len(cell.sites)
            got = sorted((s.element, *(round(x, 5) for x in s.frac)) for s in back.sites)
            want = sorted((s.element, *(round(x, 5) for x in s.frac)) for s in cell.sites)
            for g, w in zip(got, want):
                assert g[0] == w[0]
                assert np.allclose(g[1:], w[1:], atol=1e-5)

    def test_third_written_five_decimals(self):
        cell = p1_cell([Site("Cu", (1 / 3, 0, 0))])
        assert b"0.33333" in crystal.write_cif(cell)

    def test_deterministic_bytes(self):
        cell = crystal.instantiate_template(crystal.load_templates()[0],
                                            elements.lookup("Fe"))
        assert crystal.write_cif(cell) == crystal.write_cif(cell)

    def test_empty_site_list(self):
        cell = UnitCell(4, 4, 4, 90, 90, 90, 1, "P 1", ())
        doc = cif.parse(crystal.write_cif(cell))
        site_loops = list(doc.loops_with("_atom_site_fract_x"))
        assert site_loops and site_loops[0].rows == []
