"""Character-level multilingual graph-based dependency parser."""

__version__ = "0.1.0"
