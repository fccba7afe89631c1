"""Near-field THz communications and sensing simulator."""

__version__ = "0.1.0"
