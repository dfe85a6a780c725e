"""Magnetic anomaly map-matching navigation: PDA, batch matchers, INS simulation and UKF aiding."""

__version__ = "0.1.0"
