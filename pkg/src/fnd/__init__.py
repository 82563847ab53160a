"""Arabic fake-news classification pipeline: corpus tooling, text cleaning,
subword tokenization, a from-scratch transformer classifier and the matching
training/evaluation harness."""

__version__ = "0.1.0"
