"""Datasets, noise injection, robustness sweeps and the command line."""
