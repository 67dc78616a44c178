"""Anaphoric zero pronoun resolution with a zero-pronoun-specific neural network."""

__version__ = "0.1.0"
