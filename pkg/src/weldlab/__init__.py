"""Welded-tree oracle laboratory: oracles, executors, simulators, experiments."""

__version__ = "0.1.0"
