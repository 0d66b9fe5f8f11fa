"""Guided adversarial contrastive distillation."""

__version__ = "0.1.0"
