"""Dynamic intuition classifier: a two-layer transformer variant whose token
representations are quantized into discrete symbols that route sparse
attention and gate their own influence on the residual stream."""

__version__ = "0.1.0"
