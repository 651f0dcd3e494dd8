"""Spectral analysis of linearised self-gravitating polytropes."""
