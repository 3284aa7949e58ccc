from __future__ import annotations


class SparseCTError(Exception):
    pass


class InvalidSpecError(SparseCTError, ValueError):
    pass


class FormatError(SparseCTError, ValueError):
    pass


class InvalidContainerError(SparseCTError, ValueError):
    pass


class GeometryError(SparseCTError, ValueError):
    pass


class SamplingError(SparseCTError, ValueError):
    pass


class InterpolationError(SparseCTError, ValueError):
    pass


class SizeError(SparseCTError, ValueError):
    pass


class ShapeError(SparseCTError, ValueError):
    pass


class UsageError(SparseCTError, RuntimeError):
    pass


class DegenerateBatchError(SparseCTError, ValueError):
    pass


class NumericalFailureError(SparseCTError, ArithmeticError):
    def __init__(self, message: str, *, iteration: int | None = None) -> None:
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConfigError(SparseCTError, ValueError):
    def __init__(self, message: str, *, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class MissingArtifactError(SparseCTError, FileNotFoundError):
    pass


class IncompatibleCheckpointError(SparseCTError):
    pass


__all__ = [
    "SparseCTError",
    "InvalidSpecError",
    "FormatError",
    "InvalidContainerError",
    "GeometryError",
    "SamplingError",
    "InterpolationError",
    "SizeError",
    "ShapeError",
    "UsageError",
    "DegenerateBatchError",
    "NumericalFailureError",
    "ConfigError",
    "MissingArtifactError",
    "IncompatibleCheckpointError",
]
