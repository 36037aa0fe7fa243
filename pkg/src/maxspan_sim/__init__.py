"""Adversarial node placement in decentralised federated learning over directed graphs."""

__version__ = "0.1.0"
