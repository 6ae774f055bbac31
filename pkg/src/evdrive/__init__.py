"""Closed-loop driving micro-simulator with an event-camera front end."""

__version__ = "0.1.0"
