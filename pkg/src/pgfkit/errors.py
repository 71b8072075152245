"""Error taxonomy shared across the engine.

Every failure mode that callers are expected to catch gets its own class so
the CLI can map them to exit codes without string matching.
"""


class PgfkitError(Exception):
    """Base class for all engine errors."""


class DivisionByZero(PgfkitError):
    """Division by an expression that is identically zero."""


class DivisorUnsupported(PgfkitError):
    """Division by an expression outside the supported (single rational term) class."""


class IllDefinedProjection(PgfkitError):
    """A substitution made a denominator vanish (projection not well-defined)."""


class NonPolynomialExpArg(PgfkitError):
    """A substitution would make an exponential argument non-polynomial."""


class SingularAtZero(PgfkitError):
    """Taylor expansion requested around a point where a denominator vanishes."""


class UnsupportedGuard(PgfkitError):
    """Guard form outside what the closed-form filter supports."""


class UnsupportedAssignment(PgfkitError):
    """Assignment form with no closed-form generating-function rule."""


class UndefinedNormalization(PgfkitError):
    """Normalization of an eFPS whose violation mass is exactly 1 (0/0)."""


class InvariantRejected(PgfkitError):
    """Loop invariant failed the equivalence check."""

    def __init__(self, message, counterexample=None, verdict=None):
        super().__init__(message)
        self.counterexample = counterexample
        self.verdict = verdict


class ZeroDifference(PgfkitError):
    """Counterexample extraction called on an identically-zero difference."""


class DegenerateConditioning(PgfkitError):
    """Every sampled run violated an observation; no conditional estimate exists."""


class NonRationalClosedForm(PgfkitError):
    """A synthesis step needs purely rational closed forms but found exp terms."""


class ParseError(PgfkitError):
    """Source text does not conform to the grammar."""

    def __init__(self, message, line=None, col=None):
        super().__init__(message)
        self.line = line
        self.col = col


class FragmentError(PgfkitError):
    """Program lies outside the fragment required by the requested operation."""
