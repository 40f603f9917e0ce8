"""Online topological mapping: a graph of locally aligned locations, no global coordinates."""

__version__ = "0.1.0"
