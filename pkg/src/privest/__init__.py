"""Privacy definitions, auditors, minimax lower-bound machinery and private mean estimators."""

__version__ = "0.1.0"
