"""Conditional independence testing by model-X data augmentation."""

__version__ = "0.1.0"
