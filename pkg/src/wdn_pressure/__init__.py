"""Pressure forecasting and anomaly detection for water distribution SCADA data."""

__version__ = "0.1.0"
