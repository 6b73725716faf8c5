"""Synthetic multipath channels, array responses and DFT codebooks."""
