"""probenav: goal-conditioned contrastive RL on a synthetic probe-navigation task."""

__version__ = "0.1.0"
