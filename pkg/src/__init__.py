"""
GNMN epidemic simulator: mobile contact networks, distance-modulated SIR and census sampling.
"""

__version__ = "0.2.0"
