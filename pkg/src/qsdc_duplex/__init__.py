"""Two-qubit simulator and Monte Carlo harness for bidirectional quantum secure direct communication."""

__version__ = "0.1.0"
