"""Conjugate transform filtering: exact latent-Gaussian filter, its ensemble
version, two baseline ensemble filters and a grid Bayes oracle."""

__version__ = "0.1.0"
