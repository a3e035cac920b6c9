"""Desk-scale visual+textual question answering with early, late, and
answer-recommendation fusion, built on a self-contained autodiff engine."""

__version__ = "0.1.0"
