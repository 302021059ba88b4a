"""Scribble-driven interactive segmentation on superpixel graphs."""

__version__ = "0.1.0"
