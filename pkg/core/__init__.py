from .errors import TreeHarmonicError

__all__ = ["TreeHarmonicError"]
