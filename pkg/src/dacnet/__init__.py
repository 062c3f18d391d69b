"""Multi-label chest X-ray disease classification toolkit."""

__version__ = "0.1.0"
