"""Purée dilution imaging: optics simulation, features, networks, evaluation."""

__version__ = "0.1.0"
