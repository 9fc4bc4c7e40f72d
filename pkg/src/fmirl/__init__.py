"""Flow-matching teacher for inverse RL on toy continuous control."""

__version__ = "0.1.0"
