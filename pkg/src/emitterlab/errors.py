"""Shared exception types.

The split matters to the CLI: configuration/precondition problems exit
with code 2, numerical failures during a computation exit with code 3.
"""


class ModelError(ValueError):
    """Invalid model construction or violated operation precondition."""


class NumericFailure(RuntimeError):
    """A computation produced non-finite, non-physical or non-converged
    results beyond tolerance."""


class ConfigError(ValueError):
    """Invalid experiment configuration; names the offending key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key
