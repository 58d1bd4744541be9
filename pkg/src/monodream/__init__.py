"""Desk-scale monocular VLN with latent panoramic dreaming."""
__version__ = "0.1.0"
