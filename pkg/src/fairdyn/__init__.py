"""Fairness-constrained decisions and group participation dynamics."""
