"""Time-varying weak-form market efficiency from TV-AR coefficient paths."""
__version__ = "0.1.0"
