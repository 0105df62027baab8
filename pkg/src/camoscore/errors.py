"""Exception hierarchy shared across the package.

Every error raised on purpose derives from CamoscoreError and carries a
short machine-readable ``code`` so the service layer and the CLI can map
failures onto HTTP bodies and process exit codes without string matching.
"""
from __future__ import annotations


class CamoscoreError(Exception):
    """Base class for all deliberate failures."""

    code = "error"
    exit_code = 1

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


class FormatError(CamoscoreError):
    """A file decoded but is not in a supported or well-formed format."""

    code = "format"
    exit_code = 1


class ManifestError(FormatError):
    """A dataset manifest is malformed or references missing files."""

    code = "manifest"
    exit_code = 1


class ShapeError(CamoscoreError):
    """Arrays with incompatible shapes or channel counts were combined."""

    code = "shape"
    exit_code = 3


class ParameterError(CamoscoreError):
    """A configuration value or function argument is out of range."""

    code = "parameter"
    exit_code = 3


class DegenerateInputError(CamoscoreError):
    """Input is technically readable but carries no usable signal."""

    code = "degenerate-input"
    exit_code = 2


class InsufficientBackgroundError(DegenerateInputError):
    """The background region cannot host a single full patch."""

    code = "insufficient-background"
    exit_code = 2


class DegenerateRegionError(DegenerateInputError):
    """A region holds too few feature samples for covariance estimates."""

    code = "degenerate-region"
    exit_code = 2


class CannotFillError(DegenerateInputError):
    """Background synthesis has no known pixels to work from."""

    code = "cannot-fill"
    exit_code = 2


class IdMismatchError(CamoscoreError):
    """Two rankings do not cover the same set of example ids."""

    code = "id-mismatch"
    exit_code = 1


class ConvergenceError(CamoscoreError):
    """An iterative solver diverged instead of converging."""

    code = "convergence"
    exit_code = 2
