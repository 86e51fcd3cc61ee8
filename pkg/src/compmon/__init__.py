"""Digital twin and online monitoring toolkit for multi-stage centrifugal
compressors operating on real gases."""

__version__ = "0.1.0"
