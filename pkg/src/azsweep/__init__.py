"""Desk-scale AlphaZero training loop for small-board Othello with a
one-parameter-at-a-time sweep harness."""

__version__ = "0.1.0"
