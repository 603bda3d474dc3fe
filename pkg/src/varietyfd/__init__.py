"""Elliptic PDE solvers on real algebraic curves and almost-smooth surfaces."""
