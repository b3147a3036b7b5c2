"""Coordinate-space diffusion for document dewarping."""

__version__ = "1.0.0"
