"""Latent-space inpainting of images and image sequences."""

__version__ = "0.1.0"
