"""Diffusion-based light-field super-resolution on a numpy autodiff core."""

__version__ = "0.1.0"
