"""Unit tests for eeg-gafs."""
