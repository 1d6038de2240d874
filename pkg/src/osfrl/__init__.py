"""Q-learning with one-sided and full feedback for episodic inventory and auction problems."""

__version__ = "0.1.0"
