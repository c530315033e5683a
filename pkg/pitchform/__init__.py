"""pitchform: player form embeddings from pitch-by-pitch gamestate deltas."""

__version__ = "0.1.0"
