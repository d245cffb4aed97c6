"""Compiler and runtime for declarative IoT edge-to-cloud load simulations."""

__version__ = "0.1.0"
