"""gq-trainer: desk-scale seq2seq fine-tuning and serving for guiding-question
training data."""

__version__ = "0.1.0"
