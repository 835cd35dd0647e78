"""Desk-scale feed-forward-network architecture search for tiny transformer
encoders, with warm-up knowledge distillation."""

__version__ = "0.1.0"
