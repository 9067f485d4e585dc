"""EEG feature extraction and genetic-algorithm feature selection."""

__version__ = "0.1.0"
