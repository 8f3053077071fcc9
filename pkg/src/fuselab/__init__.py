"""Adaptive multimodal fusion experiments: Auto-Fusion and GAN-Fusion."""

__version__ = "0.1.0"
