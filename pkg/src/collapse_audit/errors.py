"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class AuditError(Exception):
    """Base class for all errors raised by collapse_audit."""


class DegenerateDimensionError(AuditError):
    """A continuous dimension has zero variance, so correlations are undefined."""

    def __init__(self, dimension: str):
        super().__init__(f"dimension {dimension!r} has zero variance")
        self.dimension = dimension


class OrthogonalityError(AuditError):
    """No redraw within the retry budget met the correlation threshold."""


class RecommendationError(AuditError):
    """An advisor response could not be turned into a valid Recommendation."""

    kind = "invalid"

    def __init__(self, message: str, field: str | None = None, value=None):
        super().__init__(message)
        self.field = field
        self.value = value

    def to_record(self) -> dict:
        return {"kind": self.kind, "field": self.field, "value": _jsonable(self.value), "message": str(self)}


class SchemaViolation(RecommendationError):
    kind = "schema_violation"


class UnknownProduct(RecommendationError):
    kind = "unknown_product"


class SumViolation(RecommendationError):
    kind = "sum_violation"


class DuplicateProduct(RecommendationError):
    kind = "duplicate_product"


class TransportError(AuditError):
    """The advisor endpoint could not be reached or returned an HTTP error."""

    kind = "transport"

    def to_record(self) -> dict:
        return {"kind": self.kind, "field": None, "value": None, "message": str(self)}


class CollectionAborted(AuditError):
    """Failure fraction during collection exceeded the configured limit."""


class UnseenCategoryError(AuditError):
    def __init__(self, variable: str, value: str):
        super().__init__(f"value {value!r} of {variable!r} is not in the encoder vocabulary")
        self.variable = variable
        self.value = value


class SingularSystemError(AuditError):
    """Unpenalized least squares on rank-deficient columns."""


class DegenerateTargetError(AuditError):
    """Target has no variance, so R^2 and importances are undefined."""


class UndefinedSharesError(AuditError):
    """All importances are zero; shares cannot be normalized."""


class DegenerateSampleError(AuditError):
    """A statistical test received a sample with no usable information."""


class InsufficientSampleError(AuditError):
    """Fewer eligible items than requested."""


class MissingArtifactError(AuditError):
    """A stage was run before the stage that produces its inputs."""

    def __init__(self, path, stage: str | None = None):
        hint = f" (run `{stage}` first)" if stage else ""
        super().__init__(f"missing artifact: {path}{hint}")
        self.path = path


class ManifestMismatch(AuditError):
    """A regenerated artifact differs from the hash recorded in its manifest."""


class ConfigError(AuditError):
    pass


def _jsonable(value):
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return repr(value)
