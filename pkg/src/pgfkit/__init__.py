"""Exact Bayesian inference for discrete probabilistic programs.

The package computes posterior distributions of loopy imperative programs
with observe statements, representing distributions as probability
generating functions with an explicit observation-violation term.  Loops
are handled by bounded unrolling with fixpoint detection or by verified
loop-free invariant programs; equivalence of loop-free programs in the
supported fragment is decidable, which also powers parameter synthesis
for invariant templates.  A sampling interpreter cross-validates exact
results statistically.
"""

from .errors import (
    DegenerateConditioning,
    FragmentError,
    InvariantRejected,
    ParseError,
    PgfkitError,
    UndefinedNormalization,
    UnsupportedAssignment,
    UnsupportedGuard,
)
from .gf import EFps, coefficient, filter, mass, normalize
from .lang import Program, parse, parse_expr, parse_guard, pretty_print, validate
from .semantics import (
    Invariant,
    TransformResult,
    Unroll,
    conditioned,
    transform,
    unroll_loop,
)
from .equiv import Equal, Inconclusive, NotEqual, check_equiv, check_invariant
from .synth import (
    ConstraintSystem,
    NoSolution,
    Solved,
    Unsolved,
    extract_constraints,
    solve,
    synthesize,
)
from .query import expectation, moment, probability, tail_bound, variance
from .oracle import RunConfig, compare, estimate_posterior, sample_run

__version__ = "0.1.0"

__all__ = [
    "EFps", "Program", "Unroll", "Invariant", "TransformResult",
    "RunConfig", "ConstraintSystem", "Solved", "NoSolution", "Unsolved",
    "Equal", "NotEqual", "Inconclusive",
    "parse", "parse_expr", "parse_guard", "pretty_print", "validate",
    "transform", "conditioned", "unroll_loop",
    "filter", "mass", "normalize", "coefficient",
    "check_equiv", "check_invariant",
    "extract_constraints", "solve", "synthesize",
    "expectation", "moment", "variance", "probability", "tail_bound",
    "sample_run", "estimate_posterior", "compare",
    "PgfkitError", "ParseError", "FragmentError", "UnsupportedGuard",
    "UnsupportedAssignment", "UndefinedNormalization", "InvariantRejected",
    "DegenerateConditioning",
]
