"""Cross- and intra-image prototypical learning for multi-label classification."""

__version__ = "0.1.0"
