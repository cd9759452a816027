"""Duality estimates and numerics for mass-action reaction-diffusion systems."""

__version__ = "0.1.0"
