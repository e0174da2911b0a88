"""Experiment harness: configuration, synthetic data, the end-to-end driver and CLI."""
