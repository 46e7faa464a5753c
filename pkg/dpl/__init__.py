"""Diversity-aware prototype classifier head: training, inference and evaluation."""

__version__ = "1.0.0"
