"""Spatially-explicit knowledge-graph embeddings.

Encodes geographic entities' points and bounding boxes into entity
embeddings, answers conjunctive graph queries in embedding space, and links
arbitrary coordinates to KG entities through relations.
"""

__version__ = "0.1.0"
