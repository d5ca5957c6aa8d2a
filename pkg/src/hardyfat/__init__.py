"""Grid numerics for Hardy inequalities, uniform perfectness, uniform fatness and capacity."""

__version__ = "0.1.0"
