"""Deadlock and termination checking for IMDS models of distributed systems."""

__version__ = "0.1.0"
