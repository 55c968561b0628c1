"""Character-decoupled text line recognition with radical-sequence
supervision, on a minimal numpy autodiff engine."""

__version__ = "0.1.0"
