"""Graph pointer networks for matrix-input TSP and the quadratic assignment problem."""

__version__ = "0.1.0"
