"""Binarized graph embeddings for top-K recommendation."""

try:
    from ._bitgear import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _bitgear import *  # noqa: F401,F403  (in-tree build layout)
