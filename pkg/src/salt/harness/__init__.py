"""Experiment plumbing: datasets, configs, training loops, sweeps, CLI."""
