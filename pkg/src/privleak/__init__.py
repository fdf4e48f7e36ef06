"""Privacy-preserving feature learning: confusion-loss training and leakage audits."""

from privleak._kernels import active_backend

__version__ = "0.1.0"
__all__ = ["active_backend", "__version__"]
