"""Entailment-based semantic memory and information-gain analysis for
multi-party dialogue transcripts."""

__version__ = "0.1.0"
