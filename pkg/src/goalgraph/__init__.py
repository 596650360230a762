"""Household task plans as goal refinement graphs, generated by code completion and scored by LCS."""

__version__ = "0.1.0"
