"""Scoring prediction-market forecasts of disease surveillance targets."""

__version__ = "0.1.0"
