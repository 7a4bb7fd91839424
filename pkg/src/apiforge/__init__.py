"""apiforge: a reinforcement-learning REST API fuzzer with a built-in
vulnerable target lab for deterministic training and evaluation."""

__version__ = "0.1.0"
