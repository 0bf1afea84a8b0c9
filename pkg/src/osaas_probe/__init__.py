"""OSaaS interferer attribution toolkit."""

__version__ = "0.1.0"
