"""Bilingual latent-space adversarial text generation on a shared-encoder translation model."""

__version__ = "0.1.0"
