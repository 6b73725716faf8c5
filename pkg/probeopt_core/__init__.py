"""Core library for generative-learning probing-beam optimization."""
