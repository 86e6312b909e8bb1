"""Pseudospectral laboratory for the Oldroyd-B system on the 2-D torus."""

__version__ = "0.1.0"
