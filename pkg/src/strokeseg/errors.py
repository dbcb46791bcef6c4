"""Exception types shared across the segmentation engine."""


class StrokesegError(Exception):
    """Base class for all engine errors."""

    #: short machine-readable code used by the CLI and the HTTP service
    code = "error"


class MalformedHeader(StrokesegError):
    code = "malformed_header"


class PayloadSizeMismatch(StrokesegError):
    code = "payload_size_mismatch"


class NonFiniteValue(StrokesegError):
    code = "non_finite_value"


class IoFailure(StrokesegError):
    code = "io_failure"


class IndexOutOfRange(StrokesegError):
    code = "index_out_of_range"


class EmptyMask(StrokesegError):
    code = "empty_mask"


class StrokeOutsideMask(StrokesegError):
    code = "stroke_outside_mask"


class ConflictingLabels(StrokesegError):
    code = "conflicting_labels"


class TargetTooSmall(StrokesegError):
    code = "target_too_small"


class KTooLarge(StrokesegError):
    code = "k_too_large"


class SingleClassInput(StrokesegError):
    code = "single_class_input"


class DegenerateLabels(StrokesegError):
    code = "degenerate_labels"


class ClassTooSmall(StrokesegError):
    code = "class_too_small"


class DimsMismatch(StrokesegError):
    code = "dims_mismatch"


class InvalidGeometry(StrokesegError):
    code = "invalid_geometry"


class ClassAbsent(StrokesegError):
    code = "class_absent"


class StrokesMissingClass(StrokesegError):
    code = "strokes_missing_class"


class ProductKernelNeedsSpatial(StrokesegError):
    code = "product_kernel_needs_spatial"


class UnknownSession(StrokesegError):
    code = "unknown_session"


class SessionBusy(StrokesegError):
    code = "session_busy"


class NoSegmentationYet(StrokesegError):
    code = "no_segmentation_yet"
