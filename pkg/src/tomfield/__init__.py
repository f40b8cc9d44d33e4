"""Discrete-latent behavior prediction for two-agent interactions."""

__version__ = "0.1.0"
