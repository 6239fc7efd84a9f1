"""dada: a desk-scale human-centred home-network security gateway."""

__version__ = "0.1.0"
