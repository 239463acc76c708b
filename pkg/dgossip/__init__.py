"""Deterministic simulator for decentralized federated learning with Ole-initialised gossip."""

__version__ = "0.1.0"
