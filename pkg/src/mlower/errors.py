"""Exception hierarchy shared across the compiler.

Every error carries a short machine-readable ``code`` so the CLI can emit a
stable one-line diagnostic (``error: <code>: <detail>``).
"""

from __future__ import annotations


class MlowerError(Exception):
    """Base class; ``code`` is the stable identifier used in CLI output."""

    code = "internal"


class SchemaError(MlowerError):
    """Model JSON is structurally malformed (missing or ill-typed field)."""

    code = "schema"


class ValidationError(MlowerError):
    """A domain invariant is violated; message names the offending path."""

    code = "validation"


class NarrowingCast(MlowerError):
    code = "narrowing-cast"


class DTypeMismatch(MlowerError):
    code = "dtype-mismatch"


class ShapeMismatch(MlowerError):
    code = "shape-mismatch"


class BroadcastError(MlowerError):
    code = "broadcast"


class DivisionByZero(MlowerError):
    code = "division-by-zero"


class InvalidAxis(MlowerError):
    code = "invalid-axis"


class EmptyAxis(MlowerError):
    code = "empty-axis"


class IndexOutOfBounds(MlowerError):
    code = "index-out-of-bounds"


class AccumulatorOverflowRisk(MlowerError):
    code = "accumulator-overflow"


class CyclicGraph(MlowerError):
    code = "cyclic-graph"


class DanglingReference(MlowerError):
    code = "dangling-reference"


class UnresolvedKernel(MlowerError):
    code = "unresolved-kernel"


class ShapeInferenceFailure(MlowerError):
    code = "shape-inference"


class InputMismatch(MlowerError):
    code = "input-mismatch"


class FeatureMismatch(MlowerError):
    code = "feature-mismatch"


class ProfileError(MlowerError):
    code = "profile"


class FileAccessError(MlowerError):
    code = "io"
