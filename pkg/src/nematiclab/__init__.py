"""Numerical laboratory for eigenvalue preservation in the co-rotational
Beris-Edwards system of nematic liquid crystals."""

__version__ = "0.1.0"
