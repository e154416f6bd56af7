"""Bayesian single-shot frequency estimation with engineered effective spectra."""

__version__ = "0.1.0"
