"""Knockout-tournament simulation from denoising-autoencoder team and player embeddings."""

__version__ = "0.1.0"
