"""DeepRacing testbed - closed-loop autonomous racing without the game."""

__version__ = "1.0.0"
