"""Variable-free AMR target forms, causal hierarchical attention and a toy pointer parser."""

__version__ = "0.1.0"
