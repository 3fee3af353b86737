"""Discover communities of email-address harvesters from spam-event logs."""

__version__ = "0.1.0"
