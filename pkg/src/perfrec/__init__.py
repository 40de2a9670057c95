"""Strategy-aware diversity regularisation for recommender retraining loops."""

__version__ = "0.1.0"
