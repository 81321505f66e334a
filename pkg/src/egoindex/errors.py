"""Exception hierarchy shared by all pipeline stages."""


class EgoIndexError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class DegenerateField(EgoIndexError):
    code = "degenerate_field"


class EmptyInput(EgoIndexError):
    code = "empty_input"


class EmptySegment(EgoIndexError):
    code = "empty_segment"


class ImageTooSmall(EgoIndexError):
    code = "image_too_small"


class MissingDescriptor(EgoIndexError):
    code = "missing_descriptor"


class EmptyConfig(EgoIndexError):
    code = "empty_config"


class NoDescriptors(EgoIndexError):
    code = "no_descriptors"


class DimensionMismatch(EgoIndexError):
    code = "dimension_mismatch"


class UnlocalizableFrame(EgoIndexError):
    code = "unlocalizable_frame"


class NoLocalizedFrames(EgoIndexError):
    code = "no_localized_frames"


class InsufficientData(EgoIndexError):
    code = "insufficient_data"


class EmptyObservations(EgoIndexError):
    code = "empty_observations"


class UnlabeledFrame(EgoIndexError):
    code = "unlabeled_frame"


class LengthMismatch(EgoIndexError):
    code = "length_mismatch"


class InvalidScript(EgoIndexError):
    code = "invalid_script"


class MissingModel(EgoIndexError):
    code = "missing_model"


class StageError(EgoIndexError):
    """Wraps an error raised inside a named pipeline stage."""

    code = "stage_error"

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.code = getattr(cause, "code", "error")
