"""Restoration of maximally compressed JPEG images with a U-Net/hourglass GAN."""

__version__ = "0.1.0"
