"""Tabular-conditioned attention for video regression, on a numpy autodiff core."""

__version__ = "1.0.0"
