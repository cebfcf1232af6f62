"""Layout-aware dreamer agent on procedurally generated houses."""

__version__ = "0.1.0"
