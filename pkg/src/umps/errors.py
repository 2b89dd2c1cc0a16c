"""Exception hierarchy shared across the package."""


class UmpsError(Exception):
    """Base class for all domain errors raised by this package."""


class GaugeError(UmpsError):
    """An operation required a canonical/gauge condition that does not hold."""


class GaugeDriftError(GaugeError):
    """A tensor that should have unit Frobenius norm has drifted too far from it."""


class SingularAmplitudeError(UmpsError):
    """A training sample has (numerically) zero amplitude, so its log-likelihood
    is not defined.  ``sample_index`` points at the offending dataset entry."""

    def __init__(self, sample_index, message=None):
        self.sample_index = int(sample_index)
        super().__init__(
            message or f"sample {sample_index} has zero amplitude (log-likelihood diverges)"
        )


class ImpossibleEvidenceError(UmpsError):
    """The pinned bits of a reconstruction request have zero probability."""


class ModelFormatError(UmpsError):
    """A model file is malformed (bad magic, unsupported version, truncation,
    checksum mismatch).  ``offset`` is the byte offset of the failure when known."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class IdxFormatError(UmpsError):
    """An IDX image/label file is malformed.  ``offset`` as in ModelFormatError."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
