"""Operational sampling interpreter and statistical cross-validation.

Programs are executed as Markov chains with rejection-sampling conditioning:
a failed observe discards the run.  The interpreter is vectorized over runs
with numpy; bounded-parameter distributions are sampled through exact
rational thresholds so that empirical frequencies are unbiased, and each
configured stream owns a deterministically derived RNG so results are
reproducible and order-independent across streams.

Conditional frequencies divide by the non-violated runs, including timeouts.
Timeout runs carry no final state and are reported separately; they bracket
the non-termination mass, matching an exact engine that normalizes by one
minus the violation probability rather than by the terminated mass.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateConditioning
from .gf import EFps, GAnd, GFalse, GNot, GOr, GTrue, VarCmpConst, VarCmpVar, VarModConst
from .lang import (
    Assign,
    IfElse,
    IidIncr,
    Observe,
    PChoice,
    Program,
    Sample,
    Skip,
    While,
)

Z_95 = 1.959963984540054
Z_999 = 3.2905267314919255

_ACTIVE, _VIOLATED, _TIMEOUT = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    samples: int = 100_000
    max_steps: int = 100_000
    seed: int = 0
    parallel_streams: int = 4

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.parallel_streams < 1:
            raise ValueError("need at least one stream")


@dataclass(frozen=True)
class Terminated:
    state: dict


@dataclass(frozen=True)
class Violated:
    pass


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class Empirical:
    variables: tuple
    counts: dict  # state tuple -> count of terminated runs
    n_total: int
    n_violated: int
    n_timeout: int

    @property
    def n_completed(self) -> int:
        """Runs that were not rejected: terminated plus timed out."""
        return self.n_total - self.n_violated

    @property
    def violated_rate(self) -> float:
        return self.n_violated / self.n_total

    @property
    def timeout_rate(self) -> float:
        return self.n_timeout / self.n_total

    def frequency(self, state: dict) -> float:
        key = tuple(int(state.get(v, 0)) for v in self.variables)
        return self.counts.get(key, 0) / self.n_completed

    def interval(self, state: dict, z: float = Z_95):
        key = tuple(int(state.get(v, 0)) for v in self.variables)
        return wilson_interval(self.counts.get(key, 0), self.n_completed, z)

    def top_states(self, k: int):
        ordered = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [dict(zip(self.variables, s)) for s, _ in ordered[:k]]


def wilson_interval(successes: int, n: int, z: float = Z_95):
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# Vectorized interpreter
# ---------------------------------------------------------------------------


class _Runs:
    """Mutable per-run state for a batch of executions."""

    def __init__(self, program: Program, s0: dict, n: int, max_steps: int,
                 rng: np.random.Generator):
        self.vars = {v: np.full(n, int(s0.get(v, 0)), dtype=np.int64)
                     for v in program.decls}
        self.steps = np.zeros(n, dtype=np.int64)
        self.status = np.zeros(n, dtype=np.int8)
        self.max_steps = max_steps
        self.rng = rng

    def charge(self, idx):
        """Count one step for each run; time out those over budget."""
        self.steps[idx] += 1
        over = self.steps[idx] > self.max_steps
        if over.any():
            timed = idx[over]
            self.status[timed] = _TIMEOUT
            idx = idx[~over]
        return idx

    def violate(self, idx):
        self.status[idx] = _VIOLATED


def _guard_vec(g, runs: _Runs, idx):
    if isinstance(g, GTrue):
        return np.ones(len(idx), dtype=bool)
    if isinstance(g, GFalse):
        return np.zeros(len(idx), dtype=bool)
    if isinstance(g, GNot):
        return ~_guard_vec(g.inner, runs, idx)
    if isinstance(g, GAnd):
        return _guard_vec(g.lhs, runs, idx) & _guard_vec(g.rhs, runs, idx)
    if isinstance(g, GOr):
        return _guard_vec(g.lhs, runs, idx) | _guard_vec(g.rhs, runs, idx)
    if isinstance(g, VarModConst):
        return runs.vars[g.var][idx] % g.modulus == g.residue
    if isinstance(g, VarCmpConst):
        return _cmp(runs.vars[g.var][idx], g.op, g.n)
    if isinstance(g, VarCmpVar):
        return _cmp(runs.vars[g.lhs][idx], g.op, runs.vars[g.rhs][idx])
    raise TypeError(f"not a guard: {g!r}")


def _cmp(a, op, b):
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison {op!r}")


def _bernoulli(rng, p: Fraction, size: int):
    p = Fraction(p)
    return rng.integers(0, p.denominator, size=size) < p.numerator


def _sample_dist(d, rng, size: int):
    if d.kind == "bernoulli":
        return _bernoulli(rng, d.params[0], size).astype(np.int64)
    if d.kind == "dirac":
        return np.full(size, int(d.params[0]), dtype=np.int64)
    if d.kind == "uniform":
        a, b = int(d.params[0]), int(d.params[1])
        return rng.integers(a, b + 1, size=size)
    if d.kind == "binomial":
        n, p = int(d.params[0]), Fraction(d.params[1])
        acc = np.zeros(size, dtype=np.int64)
        for _ in range(n):
            acc += _bernoulli(rng, p, size)
        return acc
    if d.kind == "geometric":
        # failures before the first success, by iterated exact coin flips
        p = Fraction(d.params[0])
        out = np.zeros(size, dtype=np.int64)
        open_idx = np.arange(size)
        while len(open_idx):
            hit = _bernoulli(rng, p, len(open_idx))
            out[open_idx[~hit]] += 1
            open_idx = open_idx[~hit]
        return out
    if d.kind == "poisson":
        return rng.poisson(float(Fraction(d.params[0])), size=size).astype(np.int64)
    raise ValueError(f"unknown distribution {d.kind!r}")


def _eval_aexpr(e, runs: _Runs, idx):
    from .lang import BinOp, Const, VarRef

    if isinstance(e, Const):
        return np.full(len(idx), e.value, dtype=np.int64)
    if isinstance(e, VarRef):
        return runs.vars[e.name][idx]
    if isinstance(e, BinOp):
        a = _eval_aexpr(e.lhs, runs, idx)
        b = _eval_aexpr(e.rhs, runs, idx)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return np.maximum(a - b, 0)  # monus
        raise ValueError(f"unknown operator {e.op!r}")
    raise TypeError(f"not an arithmetic expression: {e!r}")


def _is_deterministic(stmts) -> bool:
    for s in stmts:
        if isinstance(s, (Sample, PChoice, IidIncr)):
            return False
        if isinstance(s, IfElse) and not (
                _is_deterministic(s.then) and _is_deterministic(s.els)):
            return False
        if isinstance(s, While) and not _is_deterministic(s.body):
            return False
    return True


def _exec_stmts(stmts, runs: _Runs, idx):
    for s in stmts:
        if len(idx) == 0:
            return idx
        idx = _exec_stmt(s, runs, idx)
    return idx


def _exec_stmt(s, runs: _Runs, idx):
    idx = runs.charge(idx)
    if len(idx) == 0 or isinstance(s, Skip):
        return idx
    if isinstance(s, Observe):
        ok = _guard_vec(s.guard, runs, idx)
        runs.violate(idx[~ok])
        return idx[ok]
    if isinstance(s, Assign):
        runs.vars[s.var][idx] = _eval_aexpr(s.expr, runs, idx)
        return idx
    if isinstance(s, Sample):
        runs.vars[s.var][idx] = _sample_dist(s.dist, runs.rng, len(idx))
        return idx
    if isinstance(s, IidIncr):
        counts = runs.vars[s.count_var][idx].copy()
        open_idx = idx[counts > 0]
        remaining = counts[counts > 0]
        while len(open_idx):
            runs.vars[s.var][open_idx] += _sample_dist(s.dist, runs.rng,
                                                       len(open_idx))
            remaining -= 1
            open_idx = open_idx[remaining > 0]
            remaining = remaining[remaining > 0]
        return idx
    if isinstance(s, PChoice):
        take = _bernoulli(runs.rng, Fraction(s.prob), len(idx))
        left = _exec_stmts(s.left, runs, idx[take])
        right = _exec_stmts(s.right, runs, idx[~take])
        return np.concatenate([left, right])
    if isinstance(s, IfElse):
        hold = _guard_vec(s.guard, runs, idx)
        then = _exec_stmts(s.then, runs, idx[hold])
        els = _exec_stmts(s.els, runs, idx[~hold])
        return np.concatenate([then, els])
    if isinstance(s, While):
        det = _is_deterministic(s.body)
        hold = _guard_vec(s.guard, runs, idx)
        inside = np.sort(idx[hold])
        done = [idx[~hold]]
        while len(inside):
            pre = inside
            before = ({v: runs.vars[v][pre].copy() for v in runs.vars}
                      if det else None)
            inside = np.sort(_exec_stmts(s.body, runs, inside))
            if len(inside) == 0:
                break
            if det:
                # a deterministic body that left the state unchanged will
                # loop forever; time those runs out without replaying steps
                pos = np.searchsorted(pre, inside)
                stuck = np.ones(len(inside), dtype=bool)
                for v in runs.vars:
                    stuck &= runs.vars[v][inside] == before[v][pos]
                hopeless = stuck & _guard_vec(s.guard, runs, inside)
                if hopeless.any():
                    runs.status[inside[hopeless]] = _TIMEOUT
                    inside = inside[~hopeless]
                    if len(inside) == 0:
                        break
            cont = _guard_vec(s.guard, runs, inside)
            done.append(inside[~cont])
            inside = inside[cont]
        return np.concatenate(done)
    raise TypeError(f"not a statement: {s!r}")


def run_batch(program: Program, s0: dict, n: int, max_steps: int,
              rng: np.random.Generator):
    """Execute n runs; returns (counts, n_violated, n_timeout)."""
    runs = _Runs(program, s0, n, max_steps, rng)
    alive = _exec_stmts(program.body, runs, np.arange(n))
    counts = Counter()
    if len(alive):
        cols = [runs.vars[v][alive] for v in program.decls]
        for row in zip(*cols):
            counts[tuple(int(x) for x in row)] += 1
    n_violated = int((runs.status == _VIOLATED).sum())
    n_timeout = int((runs.status == _TIMEOUT).sum())
    return counts, n_violated, n_timeout


def sample_run(program: Program, s0: dict, cfg: RunConfig) -> object:
    """A single operational run, reported as a RunOutcome."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    counts, n_violated, n_timeout = run_batch(program, s0, 1,
                                              cfg.max_steps, rng)
    if n_violated:
        return Violated()
    if n_timeout:
        return Timeout()
    state_tuple = next(iter(counts))
    return Terminated(dict(zip(program.decls, state_tuple)))


def estimate_posterior(program: Program, s0: dict, cfg: RunConfig) -> Empirical:
    """Rejection-sampling estimate of the conditioned distribution."""
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.parallel_streams)
    base, extra = divmod(cfg.samples, cfg.parallel_streams)
    counts = Counter()
    n_violated = 0
    n_timeout = 0
    for i, ss in enumerate(streams):
        n = base + (1 if i < extra else 0)
        if n == 0:
            continue
        c, v, t = run_batch(program, s0, n, cfg.max_steps,
                            np.random.default_rng(ss))
        counts.update(c)
        n_violated += v
        n_timeout += t
    if n_violated == cfg.samples:
        raise DegenerateConditioning(
            "every sampled run violated an observation")
    return Empirical(tuple(program.decls), dict(counts), cfg.samples,
                     n_violated, n_timeout)


@dataclass(frozen=True)
class CompareReport:
    passed: bool
    max_abs_dev: float
    rows: tuple  # of dicts {state, exact, empirical, ci_low, ci_high, z}


def compare(exact: EFps, empirical: Empirical, top_k: int = 20) -> CompareReport:
    """Check exact coefficients against empirical 99.9% intervals."""
    from .gf import pvar
    from .symexpr import series_expand

    states = empirical.top_states(top_k)
    rows = []
    passed = True
    max_dev = 0.0
    n = empirical.n_completed
    inds = [pvar(v) for v in empirical.variables]
    order = max((sum(int(s[v]) for v in empirical.variables) for s in states),
                default=0)
    coeffs = series_expand(exact.dist, inds, order)
    for state in states:
        key = tuple(int(state[v]) for v in empirical.variables)
        c = coeffs.get(key)
        p_exact = float(c.as_float()) if c is not None else 0.0
        hits = empirical.counts.get(key, 0)
        phat = hits / n
        lo, hi = wilson_interval(hits, n, Z_999)
        se = math.sqrt(max(p_exact * (1 - p_exact), 1e-300) / n)
        z = (phat - p_exact) / se
        ok = lo <= p_exact <= hi
        passed = passed and ok
        max_dev = max(max_dev, abs(phat - p_exact))
        rows.append({"state": dict(state), "exact": p_exact,
                     "empirical": phat, "ci_low": lo, "ci_high": hi, "z": z})
    return CompareReport(passed, max_dev, tuple(rows))
