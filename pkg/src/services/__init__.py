"""Dataset, training, evaluation and gradient-check services."""
