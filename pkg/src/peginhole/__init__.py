"""Peg-in-hole skill acquisition with recurrent Q-learning on a quasi-static simulator."""
__version__ = "0.1.0"
