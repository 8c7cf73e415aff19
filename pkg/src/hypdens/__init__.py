"""Green-function densities for sequences in finitely connected hyperbolic planar domains."""

__version__ = "0.1.0"
