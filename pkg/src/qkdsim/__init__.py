"""Seeded Monte-Carlo simulator for BB84, SARG04, E91 and AGM06 key distribution."""

__version__ = "0.1.0"
