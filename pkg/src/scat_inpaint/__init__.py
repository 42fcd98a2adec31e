"""Adversarial inpainting with segmentation confusion and contrastive supervision."""

__version__ = "0.1.0"
