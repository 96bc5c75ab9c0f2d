"""Exception hierarchy shared across the package.

Every error a caller is expected to handle derives from ShapchatError so
library users can catch one base class. The CLI maps these onto exit codes
(usage -> 1, input/format -> 2, backend -> 3).
"""


class ShapchatError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(ShapchatError):
    """A schema definition or schema-conformance check failed."""


class RowValidationError(SchemaError):
    """A data row does not conform to its schema.

    ``fields`` names the offending feature(s) so services can surface them.
    """

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = list(fields or [])


class ModelFormatError(ShapchatError):
    """A model document is malformed; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class TrainingError(ShapchatError):
    """Training preconditions violated (empty table, bad targets, ...)."""


class ExplanationError(ShapchatError):
    """SHAP computation rejected its inputs (guards, budgets, coalitions)."""


class DegenerateSystemError(ExplanationError):
    """The sampled kernel regression system is rank deficient.

    Raised instead of silently falling back to a pseudo-inverse: an
    under-sampled system would bias the attributions without warning.
    """


class PromptError(ShapchatError):
    """Prompt assembly or instruction-record (de)serialization failed."""


class DatasetError(ShapchatError):
    """Fine-tuning corpus generation rejected its inputs."""


class EvaluationError(ShapchatError):
    """Metric computation rejected its inputs."""


class BackendError(ShapchatError):
    """Base class for LLM backend failures."""


class BackendUnreachableError(BackendError):
    """Transport-level failure that persisted through all retries."""


class ProtocolError(BackendError):
    """The backend answered with a payload we cannot interpret."""


class CapabilityError(BackendError):
    """The backend lacks a required capability (e.g. token log-probs)."""
