"""Playlist generation from free-text queries: tag extraction, tag-indexed
retrieval, embedding-based personalization, and constrained refinement."""

__version__ = "0.1.0"
