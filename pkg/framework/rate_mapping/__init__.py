"""Rate mapping module."""
