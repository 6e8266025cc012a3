"""Engagement estimation toolkit: annotation agreement analysis, windowed
LSTM regression over frame features, streaming inference, and ROC evaluation."""

__version__ = "0.1.0"
