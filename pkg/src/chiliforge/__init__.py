"""chiliforge: build nanoparticle graph datasets from crystal structures.

Pipeline stages: CIF ingestion and repair, unit-cell extraction, symmetry
expansion, supercell tiling, spherical cutouts with interaction-radius
edges, Debye scattering simulation, and packaged dataset directories.
Submodules are imported lazily; see the README for the CLI surface.
"""

__version__ = "0.1.0"
