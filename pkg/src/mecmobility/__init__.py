"""Joint service migration and uplink power control for mobile edge computing."""

__version__ = "0.1.0"
