"""liftlab: brute-force checks of lifting machinery for hybrid classical-quantum protocols."""

__version__ = "0.1.0"
