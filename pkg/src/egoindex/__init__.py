"""Activity indexing of wearable-camera video telemetry."""

__version__ = "0.1.0"
