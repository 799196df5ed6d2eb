"""Decoder-tailored polar code construction with a genetic search."""

__version__ = "0.1.0"
