"""Zero-shot hierarchical classification over digit-coded label taxonomies."""

__version__ = "0.1.0"
