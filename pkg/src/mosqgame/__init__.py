"""Mosquito population dynamics coupled to household breeding-site control by imitation."""

__version__ = "0.1.0"
