"""harmonylab: numeric representation and classification of visual harmony
in generated black/white/gray shape compositions."""

__version__ = "0.1.0"
