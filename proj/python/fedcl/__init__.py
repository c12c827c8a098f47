"""Python bindings for the fedcl core library."""

from ._fedcl import (
    ConfigError,
    DataError,
    ProtocolError,
    cl_loss,
    config_keys,
    default_config,
    fit_gmm,
    partition,
    run,
    should_freeze,
    threshold,
)

__all__ = [
    "ConfigError",
    "DataError",
    "ProtocolError",
    "cl_loss",
    "config_keys",
    "default_config",
    "fit_gmm",
    "partition",
    "run",
    "should_freeze",
    "threshold",
]
