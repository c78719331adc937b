"""Active debris removal mission planning: orbital transfers, a sequencing environment, MCTS and masked PPO."""

__version__ = "0.1.0"
