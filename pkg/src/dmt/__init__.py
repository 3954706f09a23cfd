"""Goodness-of-fit testing in Gaussian sequence models whose spectrum is one of
a finite dictionary of candidates."""

__version__ = "0.1.0"
