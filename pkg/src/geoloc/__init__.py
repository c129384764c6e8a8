"""Multi-robot object geolocation, tracking, terrain-aware planning and a
simulated mesh network feeding a shared operating picture."""

__version__ = "0.1.0"
