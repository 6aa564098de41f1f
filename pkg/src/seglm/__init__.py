"""Unsupervised character-level segmentation with Masked Segmental Language Models."""

__version__ = "0.1.0"
