"""Geometry, synthesis, diffusion, metrics and storage services."""
