"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(PipelineError):
    """Invalid camera model, unwarp settings, or scene configuration."""


class DimensionMismatchError(PipelineError):
    """Frame dimensions do not match what the operation expects."""


class FragmentBoundsError(PipelineError):
    """A point lies outside the fragment it is being mapped from."""


class DegenerateBoxError(PipelineError):
    """Box with non-positive width or height."""


class EmptyPointSetError(PipelineError):
    """A box was requested around zero points."""


class NoKeypointsError(PipelineError):
    """Pose detection has no keypoint above the confidence cutoff."""


class NoSamplesError(PipelineError):
    """Threshold selection requires at least one scored sample."""


class ProviderTimeoutError(PipelineError):
    """External detection provider did not reply within its timeout."""


class ProtocolError(PipelineError):
    """External detection provider sent a malformed reply."""


class SchemaMismatchError(PipelineError):
    """Serialized file carries an unknown schema version."""


class HistoryError(PipelineError):
    """Frame ring does not hold enough history for the requested ages."""


class FrameOrderError(PipelineError):
    """Frame pushed out of order into a ring."""


class InvalidResolutionError(PipelineError):
    """Requested raster resolution is outside the supported range."""
