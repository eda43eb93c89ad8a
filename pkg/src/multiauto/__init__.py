"""Numerical toolkit for multi-almost automorphic functions and certified Picard solvers."""

__version__ = "0.1.0"
