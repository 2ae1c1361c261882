"""feedmix: compose custom social feeds from many sources with filters and scoring."""

__version__ = "0.1.0"
