"""Goal recognition for road vehicles under occlusion."""

__version__ = "0.1.0"
