"""Filter-assisted sample-based quantum diagonalization on matrix product states."""

__version__ = "0.1.0"
