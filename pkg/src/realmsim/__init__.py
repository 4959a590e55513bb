"""Cycle-level AXI4 interconnect simulator with per-manager traffic regulation units."""

__version__ = "0.1.0"
