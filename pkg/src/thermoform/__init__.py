"""Thermodynamic formalism numerics for polynomial interval maps."""
__version__ = "0.1.0"
