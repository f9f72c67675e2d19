"""Ride-pooling dispatch coordinated with public transit.

Simulator, offline conservative Q-learning with reward-guided online
fine-tuning, and the baseline service modes, driven by the ``poolnet`` CLI.
"""

__version__ = "0.1.0"
