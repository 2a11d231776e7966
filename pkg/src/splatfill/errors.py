"""Exception types shared across the package."""
from __future__ import annotations


class SplatfillError(Exception):
    """Base class for package-specific errors."""


class BehindCameraError(SplatfillError):
    """A point resolved to camera-frame depth at or behind the near plane."""


class ParseError(SplatfillError):
    """A file (PLY, PNG, JSON) could not be parsed."""


class BackendError(SplatfillError):
    """Base class for failures of pluggable model backends."""


class BackendUnavailableError(BackendError):
    """A remote backend call failed; carries a transcript of the exchange."""

    def __init__(self, message: str, transcript: str = ""):
        super().__init__(message)
        self.transcript = transcript


class OracleMissError(BackendError):
    """The oracle inpainter has no ground-truth image for the requested step."""


class PipelineAbortedError(SplatfillError):
    """A backend failure aborted a pipeline run.

    Carries the last completed scene and the trace accumulated so far so
    callers can inspect partial progress.
    """

    def __init__(self, message: str, scene, trace, step: int):
        super().__init__(message)
        self.scene = scene
        self.trace = trace
        self.step = step
