"""Simulated SAR target recognition: signal simulation, back-projection,
a small numpy CNN stack, training schemes and attack-based robustness."""

__version__ = "0.1.0"
