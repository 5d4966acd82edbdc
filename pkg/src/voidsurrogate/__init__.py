"""PCA-compressed surrogates for stress fields around elliptical voids."""

__version__ = "0.1.0"
