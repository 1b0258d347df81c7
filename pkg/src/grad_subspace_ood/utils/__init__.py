"""
Utility package providing logging, errors, stage timing and parallel helpers.
"""

from grad_subspace_ood.utils.logger import logger

__all__ = ["logger"]
