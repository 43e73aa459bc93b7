"""Numerical laboratory for the convexified cross-diffusion gradient flow."""
__version__ = "0.1.0"
