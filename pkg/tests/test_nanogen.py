import numpy as np
import pytest

from chiliforge import cif, crystal, dataset, elements, nanogen
from chiliforge.cif import Site, UnitCell
from chiliforge.errors import (CellTooLarge, EmptyParticle, InvariantViolation,
                               NoMetalAtom)


def cubic_cell(a=4.0, sites=None):
    sites = sites or (Site("Mg", (0, 0, 0)), Site("O", (0.5, 0.5, 0.5)))
    return UnitCell(a, a, a, 90, 90, 90, 1, "P 1", tuple(sites), ("x, y, z",), "test")


def make_cloud(positions, symbols, radii=None, metal=None, d_min=1.0):
    positions = np.asarray(positions, dtype=float)
    n = len(symbols)
    if radii is None:
        radii = np.array([elements.interaction_radius(s) for s in symbols])
    if metal is None:
        metal = np.array([elements.lookup(s).is_metal for s in symbols])
    return nanogen.AtomCloud(
        positions=positions, symbols=np.array(symbols), is_metal=np.asarray(metal),
        interaction_radii=np.asarray(radii, dtype=float),
        origin_distances=np.linalg.norm(positions, axis=1),
        min_cell_distance=d_min, center=np.zeros(3))


def brute_force_edges(cloud):
    """O(N^2) oracle for the neighborhood-overlap rule."""
    out = []
    for i in range(cloud.n_atoms):
        for j in range(i + 1, cloud.n_atoms):
            d = float(np.linalg.norm(cloud.positions[i] - cloud.positions[j]))
            if d <= cloud.interaction_radii[i] + cloud.interaction_radii[j]:
                out.append((i, j))
    return sorted(out)


class TestSupercell:
    def test_replication_arithmetic(self):
        cloud = nanogen.build_supercell(cubic_cell(a=4.0), 50.0)
        assert cloud.n_atoms == 2 * 14 ** 3  # ceil(55/4) = 14

    def test_large_cell_single_replication(self):
        cloud = nanogen.build_supercell(cubic_cell(a=55.0), 50.0)
        assert cloud.n_atoms == 2

    def test_extent_covers_diameter_plus_padding(self):
        cell = cubic_cell(a=4.0)
        cloud = nanogen.build_supercell(cell, 50.0)
        span = cloud.positions.max(axis=0) - cloud.positions.min(axis=0)
        # atom extent plus one cell reaches the full tiled block length
        assert np.all(span + 4.0 >= 55.0)

    def test_cap(self):
        with pytest.raises(CellTooLarge):
            nanogen.build_supercell(cubic_cell(a=0.5), 50.0)

    def test_eight_atoms_times_tiles(self):
        sites = tuple(Site("Mg", (x / 2, y / 2, z / 2))
                      for x in (0, 1) for y in (0, 1) for z in (0, 1))
        cloud = nanogen.build_supercell(cubic_cell(a=4.0, sites=sites), 50.0)
        assert cloud.n_atoms == 8 * 14 ** 3

    def test_min_cell_distance_includes_images(self):
        # single atom per cell: the shortest distance is to its own image
        cell = cubic_cell(a=3.0, sites=(Site("Cu", (0, 0, 0)),))
        assert nanogen.min_cell_distance(cell) == pytest.approx(3.0)


class TestCenterCloud:
    def test_single_metal_lands_at_origin(self):
        cloud = make_cloud([[5.0, 5.0, 5.0], [7.0, 5.0, 5.0]], ["Cu", "O"])
        cloud.center = np.array([5.0, 5.0, 5.0])
        centered = nanogen.center_cloud(cloud)
        assert np.allclose(centered.positions[0], 0.0)
        assert centered.origin_distances[0] == 0.0

    def test_tie_breaks_to_lower_index(self):
        cloud = make_cloud([[1.0, 0, 0], [-1.0, 0, 0]], ["Cu", "Cu"])
        centered = nanogen.center_cloud(cloud)
        assert np.allclose(centered.positions[0], 0.0)

    def test_no_metal(self):
        cloud = make_cloud([[0.0, 0, 0]], ["O"])
        with pytest.raises(NoMetalAtom):
            nanogen.center_cloud(cloud)


class TestEdges:
    def test_cu_o_pair_bonded_at_2A(self):
        cloud = make_cloud([[0.0, 0, 0], [2.0, 0, 0]], ["Cu", "O"])
        edges = nanogen.build_edges(cloud)
        # threshold = 1.25 * (1.35 + 0.60) = 2.4375
        assert edges.index.tolist() == [[0, 1]]
        assert edges.dist[0] == pytest.approx(2.0)
        assert not edges.fallback

    def test_cu_o_pair_too_far_at_2_5A(self):
        cloud = make_cloud([[0.0, 0, 0], [2.5, 0, 0]], ["Cu", "O"])
        edges = nanogen.build_edges(cloud)
        assert edges.index.shape[0] == 0 or edges.fallback

    def test_fallback_engages_at_110_percent(self):
        cloud = make_cloud([[0.0, 0, 0], [3.0, 0, 0]], ["Cu", "Cu"],
                           radii=[0.1, 0.1], d_min=3.0)
        edges = nanogen.build_edges(cloud)
        assert edges.fallback
        assert edges.index.tolist() == [[0, 1]]  # threshold 1.10 * 3.0 = 3.3

    def test_fallback_not_triggered_when_any_edge_exists(self):
        cloud = make_cloud([[0, 0, 0], [2.0, 0, 0], [30.0, 0, 0]],
                           ["Cu", "O", "Cu"], d_min=2.0)
        edges = nanogen.build_edges(cloud)
        assert not edges.fallback
        assert edges.index.tolist() == [[0, 1]]

    def test_grid_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for trial in range(5):
            n = 120
            pos = rng.uniform(0, 18, size=(n, 3))
            symbols = list(rng.choice(["Cu", "O", "Ba"], size=n))
            cloud = make_cloud(pos, symbols)
            edges = nanogen.build_edges(cloud)
            assert edges.index.tolist() == [list(p) for p in brute_force_edges(cloud)]
            d = np.linalg.norm(pos[edges.index[:, 0]] - pos[edges.index[:, 1]], axis=1)
            assert np.abs(d - edges.dist).max() < 1e-9

    def test_closed_inequality_at_threshold(self):
        r = elements.interaction_radius("Cu")
        cloud = make_cloud([[0.0, 0, 0], [2 * r, 0, 0]], ["Cu", "Cu"])
        edges = nanogen.build_edges(cloud)
        assert edges.index.shape[0] == 1


class TestCutout:
    def setup_method(self):
        self.cloud = make_cloud(
            [[5.0, 0, 0], [5.1, 0, 0], [0, 5.4, 0], [0, 4.9, 0], [0, 0, 0]],
            ["Cu", "Cu", "O", "Cu", "Cu"])
        self.edges = nanogen.EdgeSet(
            index=np.array([[2, 3]]), dist=np.array([0.5]))

    def test_boundary_inclusive(self):
        picked = nanogen.cut_nanoparticle(self.cloud, self.edges, 5.0)
        assert 0 in picked  # metal at exactly 5.0

    def test_beyond_boundary_excluded(self):
        picked = nanogen.cut_nanoparticle(self.cloud, self.edges, 5.0)
        assert 1 not in picked  # metal at 5.1

    def test_padding_pulls_bonded_oxygen(self):
        picked = nanogen.cut_nanoparticle(self.cloud, self.edges, 5.0)
        assert 2 in picked  # oxygen at 5.4 bonded to core metal at 4.9

    def test_unbonded_far_oxygen_excluded(self):
        cloud = make_cloud([[0, 0, 0], [0, 5.4, 0]], ["Cu", "O"])
        edges = nanogen.EdgeSet(np.empty((0, 2), dtype=np.int64), np.empty(0))
        picked = nanogen.cut_nanoparticle(cloud, edges, 5.0)
        assert picked.tolist() == [0]

    def test_empty_particle(self):
        cloud = make_cloud([[9.0, 0, 0]], ["Cu"])
        edges = nanogen.EdgeSet(np.empty((0, 2), dtype=np.int64), np.empty(0))
        with pytest.raises(EmptyParticle):
            nanogen.cut_nanoparticle(cloud, edges, 5.0)

    def test_radius_monotonicity(self):
        rng = np.random.default_rng(23)
        pos = rng.uniform(-12, 12, size=(300, 3))
        symbols = list(rng.choice(["Cu", "O"], size=300))
        cloud = make_cloud(pos, symbols)
        edges = nanogen.build_edges(cloud)
        previous = set()
        for radius in (3.0, 5.0, 8.0, 11.0):
            try:
                picked = set(nanogen.cut_nanoparticle(cloud, edges, radius).tolist())
            except EmptyParticle:
                picked = set()
            assert previous <= picked
            previous = picked


class TestDiameter:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(31)
        pos = rng.uniform(0, 30, size=(500, 3))
        d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1).max()
        assert nanogen.max_pairwise_distance(pos) == pytest.approx(d, rel=1e-12)

    def test_collinear_cloud(self):
        pos = np.zeros((40, 3))
        pos[:, 0] = np.linspace(0, 7, 40)
        assert nanogen.max_pairwise_distance(pos) == pytest.approx(7.0)

    def test_tiny(self):
        assert nanogen.max_pairwise_distance(np.zeros((1, 3))) == 0.0


class TestAssemble:
    def test_two_atom_particle(self):
        cell = cubic_cell(a=10.0, sites=(Site("Cu", (0, 0, 0)), Site("O", (0.2, 0, 0))))
        cloud = make_cloud([[0.0, 0, 0], [2.0, 0, 0]], ["Cu", "O"], d_min=2.0)
        edges = nanogen.build_edges(cloud)
        graph = nanogen.assemble_graph(cell, cloud, edges, [0, 1])
        assert graph.x.shape == (2, 4)
        assert graph.edge_index.shape == (2, 2)
        assert graph.y["n_bonds"] == 2
        nanogen.validate_graph(graph)

    def test_bond_count_doubles_undirected_pairs(self, small_graph):
        assert small_graph.y["n_bonds"] % 2 == 0
        undirected = {tuple(sorted(p)) for p in small_graph.edge_index.T.tolist()}
        assert small_graph.y["n_bonds"] == 2 * len(undirected)

    def test_node_features_match_element_table(self, small_graph):
        cs = elements.lookup("Cs")
        row = small_graph.x[small_graph.x[:, 0] == cs.atomic_number][0]
        assert row[1] == pytest.approx(cs.slater_radius)
        assert row[2] == pytest.approx(cs.atomic_weight)
        assert row[3] == pytest.approx(cs.electron_affinity)

    def test_pos_frac_unwrapped(self, small_graph):
        # a 10 A particle spans several cells, so unwrapped fractions must
        # leave [0, 1)
        assert small_graph.pos_frac.min() < 0.0 or small_graph.pos_frac.max() >= 1.0

    def test_edges_sorted_and_consistent(self, small_graph):
        ei = small_graph.edge_index
        order = np.lexsort((ei[1], ei[0]))
        assert np.array_equal(order, np.arange(ei.shape[1]))
        d = np.linalg.norm(small_graph.pos_abs[ei[0]] - small_graph.pos_abs[ei[1]],
                           axis=1)
        assert np.abs(d - small_graph.edge_attr[:, 0]).max() <= 1e-9

    def test_unit_cell_subgraph_fields(self, small_graph):
        y = small_graph.y
        m = y["unit_cell_n_atoms"]
        assert y["unit_cell_node_feat"].shape == (m, 4)
        assert y["unit_cell_pos_abs"].shape == (m, 3)
        assert y["unit_cell_pos_frac"].shape == (m, 3)
        assert y["unit_cell_edge_index"].shape[1] == y["unit_cell_n_bonds"]

    def test_labels(self, small_graph):
        y = small_graph.y
        assert y["crystal_type"] == "cesium chloride"
        assert y["space_group_number"] == 221
        assert y["crystal_system"] == "cubic"
        assert y["crystal_system_number"] == 7
        assert y["n_atomic_species"] == 2
        assert sorted(y["atomic_species"].tolist()) == [8, 55]

    def test_determinism_bytes(self, small_graph):
        from tests.conftest import build_graphs
        again = build_graphs("cesium chloride", "Cs", (5.0,))[0]
        assert dataset.write_record(again) == dataset.write_record(small_graph)


class TestValidateGraph:
    def test_detects_asymmetric_edges(self, small_graph):
        import dataclasses
        bad = dataclasses.replace(
            small_graph,
            edge_index=small_graph.edge_index[:, :-1],
            edge_attr=small_graph.edge_attr[:-1])
        with pytest.raises(InvariantViolation):
            nanogen.validate_graph(bad)

    def test_detects_species_mismatch(self, small_graph):
        import dataclasses
        y = dict(small_graph.y)
        y["atomic_species"] = np.array([8], dtype=np.int64)
        with pytest.raises(InvariantViolation):
            nanogen.validate_graph(dataclasses.replace(small_graph, y=y))
