import pytest

from chiliforge import crystal, elements, pipeline


def build_graphs(template_name, metal, radii):
    """End-to-end graphs for one (template, metal) pair, one per radius."""
    template = next(t for t in crystal.load_templates() if t.name == template_name)
    cell = crystal.instantiate_template(template, elements.lookup(metal))
    return [graph for _, graph in
            pipeline.graphs_for_cell(cell, radii, template_name)]


@pytest.fixture(scope="session")
def small_graph():
    """One real, fully populated record (cesium chloride keeps it tiny)."""
    return build_graphs("cesium chloride", "Cs", (5.0,))[0]


@pytest.fixture(scope="session")
def small_graph_pair():
    return build_graphs("cesium chloride", "Cs", (5.0, 10.0))
