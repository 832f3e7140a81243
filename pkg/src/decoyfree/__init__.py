"""Key rates for decoy-free weak-coherent-pulse QKD (BB84, NPAB BB84, SARG04)."""

__version__ = "0.1.0"
