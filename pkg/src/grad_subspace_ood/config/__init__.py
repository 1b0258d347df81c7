"""
Configuration package for the gradient-subspace OOD toolkit.
Provides centralized access to ambient settings and run configuration.
"""

from grad_subspace_ood.config.config import (
    TOOL_VERSION,
    RunConfig,
    get_settings,
    resolve_run_config,
    settings,
)

__all__ = [
    "TOOL_VERSION",
    "RunConfig",
    "get_settings",
    "resolve_run_config",
    "settings",
]
