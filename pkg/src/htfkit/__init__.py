"""Harmonic transfer functions, frame transformations and droop-VSI stability."""
