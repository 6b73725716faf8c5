"""Probing-beam measurements and hybrid beamforming."""
