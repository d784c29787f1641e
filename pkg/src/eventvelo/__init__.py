"""Event-camera multi-view velocimetry for fast fragments."""

__version__ = "0.1.0"
