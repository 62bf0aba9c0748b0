"""Fourth-order SBP finite differences for the 3D elastic wave equation on
curvilinear two-block grids with an energy-stable 1:2 mesh-refinement
interface."""

__version__ = "0.1.0"
