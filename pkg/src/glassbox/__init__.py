"""Glass-box HDMR decompositions of functions and black-box predictors."""

__version__ = "0.1.0"
