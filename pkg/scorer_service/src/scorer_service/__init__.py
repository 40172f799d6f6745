"""HTTP cross-encoder scorer: serving and fine-tuning."""

__version__ = "0.1.0"
