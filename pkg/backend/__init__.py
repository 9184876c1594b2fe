"""ridgecast: SVD-accelerated Bayesian predictive regressions for survey-rich forecasting."""

__version__ = "0.1.0"
