"""Minimax optimization lab: GDA, OGDA, EG and generalized OGDA on small
nonconvex-(strongly-)concave games, with exact spectral predictors and
descent-lemma diagnostics."""

__version__ = "0.1.0"
