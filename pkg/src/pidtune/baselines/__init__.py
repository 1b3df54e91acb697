"""Comparison optimizers sharing the CMA-ES run contract."""
