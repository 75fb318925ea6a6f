"""Regularized deep belief network regression for crash-frequency data."""

__version__ = "0.1.0"
