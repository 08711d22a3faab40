"""Motion-instruction control loop: annotate, learn, correct, intervene."""

__version__ = "0.1.0"
