"""Continuation and multiple-solution search for semilinear elliptic problems on polygons."""

__version__ = "0.1.0"
