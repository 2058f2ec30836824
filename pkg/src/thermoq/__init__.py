"""Physics-informed fitted Q-iteration for single-zone building heating."""

__version__ = "0.1.0"
