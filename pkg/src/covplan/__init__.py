"""Coverage planning for a mobile agent with a rotatable triangular camera."""

__version__ = "0.1.0"
