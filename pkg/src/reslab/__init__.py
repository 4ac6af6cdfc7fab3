"""Superconducting CPW resonator characterisation from complex S21 sweeps."""
__version__ = "0.1.0"
