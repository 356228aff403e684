"""queryboard: turn a log of example SQL queries into an interactive
multi-visualization interface specification."""

__version__ = "0.1.0"
