"""Online learning to transport over discrete probability measures."""

__version__ = "0.1.0"
