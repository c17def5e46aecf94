"""Variable-ansatz VQE with gradient-sensitive alternate training."""
__version__ = "0.1.0"
