"""Logical perceptrons with L0 gates and concept rule set extraction."""

__version__ = "0.1.0"
