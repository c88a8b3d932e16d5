"""Triple-junction solutions of the vector Allen-Cahn equation."""

__version__ = "0.1.0"
