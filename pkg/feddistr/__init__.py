"""One-round federated learning by distribution transfer."""

__version__ = "0.1.0"
