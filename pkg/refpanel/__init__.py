"""Asymptotic risk of lasso and ridge estimators fitted with a reference panel, with AMP and Monte Carlo checks."""

__version__ = "0.1.0"
