"""Multi-capture pose estimation with domain-randomized synthetic training."""

__version__ = "0.1.0"
