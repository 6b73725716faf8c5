"""Probing-beam optimization module."""
