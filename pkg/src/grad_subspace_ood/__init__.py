"""
Out-of-distribution detection from low-dimensional subspaces of per-sample
parameter gradients.
"""

from grad_subspace_ood.config import TOOL_VERSION as __version__

__all__ = ["__version__"]
