"""Live-streaming channel telemetry: collection, bot filtering, popularity
analysis and growth classification."""

__version__ = "0.1.0"
