"""gqkit: mine, annotate, analyze, generate, and evaluate in-text guiding
questions."""

__version__ = "0.1.0"
