"""Concrete syntax and AST for the guarded probabilistic language.

Programs are sequences of statements over natural-number variables, with
probabilistic choice, conditioning (`observe`) and while loops:

    nat x;
    h := 1;
    while (h = 1) { { h := 0 } [1/2] { t := t + 1 } }
    observe (t % 2 = 1);

The same tokenizer also serves the textual expression syntax used for
priors and for rendering generating functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from . import gf
from .errors import ParseError
from .gf import (
    GAnd,
    GFalse,
    GNot,
    GOr,
    GTrue,
    VarCmpConst,
    VarCmpVar,
    VarModConst,
)
from .symexpr import (
    META,
    PARAMETER,
    PROGRAM,
    Indeterminate,
    Poly,
    SymExpr,
    SX_ONE,
)

DIST_KINDS = ("bernoulli", "geometric", "poisson", "uniform", "binomial", "dirac")

KEYWORDS = {"nat", "skip", "if", "else", "while", "observe", "diverge", "iid",
            "true", "false"}


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # "+" or "-"
    lhs: object
    rhs: object


@dataclass(frozen=True)
class DistLiteral:
    kind: str
    params: tuple  # Fraction | int | str (parameter symbol)

    def __str__(self):
        return f"{self.kind}({', '.join(_param_str(p) for p in self.params)})"


def _param_ratio(name: str, den: int) -> Poly:
    """A probability of the form parameter/denominator, kept symbolic."""
    return Poly.var(Indeterminate(name, PARAMETER)).scale(Fraction(1, den))


def _param_str(p):
    if isinstance(p, Poly):
        terms = list(p.terms.items())
        if len(terms) == 1:
            (mono, c) = terms[0]
            if len(mono) == 1 and mono[0][1] == 1 and c.numerator == 1:
                name = mono[0][0].name
                return name if c == 1 else f"{name}/{c.denominator}"
        from .symexpr import poly_to_str

        return poly_to_str(p)
    return str(p)


@dataclass(frozen=True)
class Skip:
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign:
    var: str
    expr: object  # Const | VarRef | BinOp
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Sample:
    var: str
    dist: DistLiteral
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class IidIncr:
    var: str
    dist: DistLiteral
    count_var: str
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class PChoice:
    left: tuple
    prob: object  # Fraction | str
    right: tuple
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class IfElse:
    guard: object
    then: tuple
    els: tuple
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class While:
    guard: object
    body: tuple
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Observe:
    guard: object
    loc: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    decls: tuple
    body: tuple

    def __str__(self):
        return pretty_print(self)


@dataclass(frozen=True)
class FragmentReport:
    loop_free: bool
    credip: bool
    unsupported: tuple  # of (loc, reason)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[$]?[A-Za-z_@][A-Za-z_0-9']*)
  | (?P<op>:=|\+=|<=|>=|!=|&&|\|\||[-+*/^%<>=!(){}\[\];,])
""", re.VERBOSE)


class _Tokens:
    def __init__(self, text):
        self.toks = []
        line, col = 1, 1
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", line, col)
            value = m.group(0)
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, value, line, col))
            nl = value.count("\n")
            if nl:
                line += nl
                col = len(value) - value.rfind("\n")
            else:
                col += len(value)
            pos = m.end()
        self.i = 0

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else ("eof", "", -1, -1)

    def next(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, value):
        kind, v, line, col = self.peek()
        if v != value:
            raise ParseError(f"expected {value!r}, found {v or 'end of input'!r}",
                             line, col)
        return self.next()

    def at(self, value):
        return self.peek()[1] == value

    def end_stmt(self):
        """Consume ';', which may be omitted right before '}' or the end."""
        if self.at(";"):
            self.next()
        elif self.peek()[1] != "}" and self.peek()[0] != "eof":
            self.error("expected ';'")

    def skip_semi(self):
        """Consume an optional ';' after a block-shaped statement."""
        if self.at(";"):
            self.next()

    def error(self, msg):
        _, v, line, col = self.peek()
        raise ParseError(f"{msg} (found {v or 'end of input'!r})", line, col)


# ---------------------------------------------------------------------------
# Program parser
# ---------------------------------------------------------------------------


def parse(text: str) -> Program:
    ts = _Tokens(text)
    decls = []
    while ts.at("nat"):
        ts.next()
        kind, name, line, col = ts.next()
        if kind != "ident":
            raise ParseError("expected variable name after 'nat'", line, col)
        decls.append(name)
        ts.expect(";")
    body = _parse_stmts(ts, top=True)
    if ts.peek()[0] != "eof":
        ts.error("unexpected trailing input")
    return Program(_collect_decls(decls, body), tuple(body))


def _parse_stmts(ts, top=False):
    out = []
    while True:
        kind, v, _, _ = ts.peek()
        if kind == "eof" or v == "}":
            if top and v == "}":
                ts.error("unmatched '}'")
            return out
        out.append(_parse_stmt(ts))


def _parse_block(ts):
    ts.expect("{")
    body = _parse_stmts(ts)
    ts.expect("}")
    return tuple(body)


def _parse_stmt(ts):
    kind, v, line, col = ts.peek()
    loc = (line, col)
    if v == "skip":
        ts.next()
        ts.end_stmt()
        return Skip(loc=loc)
    if v == "diverge":
        ts.next()
        ts.end_stmt()
        # sugar for while(true) { skip; }
        return While(GTrue(), (Skip(loc=loc),), loc=loc)
    if v == "observe":
        ts.next()
        ts.expect("(")
        g = _parse_guard(ts)
        ts.expect(")")
        ts.end_stmt()
        return Observe(g, loc=loc)
    if v == "if":
        ts.next()
        ts.expect("(")
        g = _parse_guard(ts)
        ts.expect(")")
        then = _parse_block(ts)
        els = ()
        if ts.at("else"):
            ts.next()
            els = _parse_block(ts)
        ts.skip_semi()
        return IfElse(g, then, els, loc=loc)
    if v == "while":
        ts.next()
        ts.expect("(")
        g = _parse_guard(ts)
        ts.expect(")")
        body = _parse_block(ts)
        ts.skip_semi()
        return While(g, body, loc=loc)
    if v == "{":
        left = _parse_block(ts)
        ts.expect("[")
        prob = _parse_prob(ts)
        ts.expect("]")
        right = _parse_block(ts)
        ts.skip_semi()
        return PChoice(left, prob, right, loc=loc)
    if kind == "ident" and v not in KEYWORDS:
        name = ts.next()[1]
        if ts.at(":="):
            ts.next()
            if _at_dist(ts):
                d = _parse_dist(ts)
                ts.end_stmt()
                return Sample(name, d, loc=loc)
            e = _parse_aexpr(ts)
            ts.end_stmt()
            return Assign(name, e, loc=loc)
        if ts.at("+="):
            ts.next()
            ts.expect("iid")
            ts.expect("(")
            d = _parse_dist(ts)
            ts.expect(",")
            ckind, cname, cl, cc = ts.next()
            if ckind != "ident":
                raise ParseError("expected a variable name in iid(...)", cl, cc)
            ts.expect(")")
            ts.end_stmt()
            return IidIncr(name, d, cname, loc=loc)
        ts.error("expected ':=' or '+=' after variable")
    ts.error("expected a statement")


def _at_dist(ts):
    return ts.peek()[1] in DIST_KINDS and ts.peek(1)[1] == "("


def _parse_dist(ts):
    kind, v, line, col = ts.next()
    if v not in DIST_KINDS:
        raise ParseError(f"unknown distribution {v!r}", line, col)
    ts.expect("(")
    params = [_parse_dist_param(ts)]
    while ts.at(","):
        ts.next()
        params.append(_parse_dist_param(ts))
    ts.expect(")")
    _check_dist(v, params, line, col)
    return DistLiteral(v, tuple(params))


def _parse_dist_param(ts):
    kind, v, line, col = ts.peek()
    if kind == "num":
        ts.next()
        n = int(v)
        if ts.at("/"):
            ts.next()
            k2, d, l2, c2 = ts.next()
            if k2 != "num":
                raise ParseError("expected denominator", l2, c2)
            return Fraction(n, int(d))
        return Fraction(n)
    if kind == "ident" and v not in KEYWORDS:
        ts.next()
        if ts.at("/"):
            ts.next()
            k2, d, l2, c2 = ts.next()
            if k2 != "num":
                raise ParseError("expected denominator", l2, c2)
            return _param_ratio(v, int(d))
        return v  # parameter symbol
    ts.error("expected a rational literal or parameter symbol")


def _check_dist(kind, params, line, col):
    arity = {"bernoulli": 1, "geometric": 1, "poisson": 1,
             "uniform": 2, "binomial": 2, "dirac": 1}[kind]
    if len(params) != arity:
        raise ParseError(f"{kind} takes {arity} parameter(s)", line, col)
    def nat(p, what):
        if isinstance(p, str):
            raise ParseError(f"{kind}: {what} must be a literal", line, col)
        if p.denominator != 1 or p < 0:
            raise ParseError(f"{kind}: {what} must be a natural number", line, col)
    if kind in ("bernoulli", "geometric", "binomial"):
        p = params[-1]
        if not isinstance(p, str) and not (0 <= p <= 1):
            raise ParseError(f"{kind}: probability out of [0,1]", line, col)
    if kind == "uniform":
        nat(params[0], "lower bound")
        nat(params[1], "upper bound")
        if params[0] > params[1]:
            raise ParseError("uniform: empty range", line, col)
    if kind == "binomial":
        nat(params[0], "count")
    if kind == "dirac":
        nat(params[0], "value")
    if kind == "poisson" and not isinstance(params[0], str) and params[0] < 0:
        raise ParseError("poisson: rate must be nonnegative", line, col)


def _parse_prob(ts):
    kind, v, line, col = ts.peek()
    if kind == "num":
        ts.next()
        n = int(v)
        if ts.at("/"):
            ts.next()
            k2, d, l2, c2 = ts.next()
            if k2 != "num":
                raise ParseError("expected denominator", l2, c2)
            p = Fraction(n, int(d))
        else:
            p = Fraction(n)
        if not 0 <= p <= 1:
            raise ParseError("probability out of [0,1]", line, col)
        return p
    if kind == "ident" and v not in KEYWORDS:
        ts.next()
        if ts.at("/"):
            ts.next()
            k2, d, l2, c2 = ts.next()
            if k2 != "num":
                raise ParseError("expected denominator", l2, c2)
            return _param_ratio(v, int(d))
        return v
    ts.error("expected a probability")


def _parse_aexpr(ts):
    e = _parse_aterm(ts)
    while ts.peek()[1] in ("+", "-"):
        op = ts.next()[1]
        e = BinOp(op, e, _parse_aterm(ts))
    return e


def _parse_aterm(ts):
    kind, v, line, col = ts.peek()
    if kind == "num":
        ts.next()
        return Const(int(v))
    if kind == "ident" and v not in KEYWORDS:
        ts.next()
        return VarRef(v)
    if v == "(":
        ts.next()
        e = _parse_aexpr(ts)
        ts.expect(")")
        return e
    ts.error("expected an arithmetic term")


def parse_guard(text: str):
    """Parse a standalone guard expression, e.g. for query strings."""
    ts = _Tokens(text)
    g = _parse_guard(ts)
    if ts.peek()[0] != "eof":
        ts.error("unexpected trailing input after guard")
    return g


def _parse_guard(ts):
    g = _parse_guard_conj(ts)
    while ts.at("||"):
        ts.next()
        g = GOr(g, _parse_guard_conj(ts))
    return g


def _parse_guard_conj(ts):
    g = _parse_guard_atom(ts)
    while ts.at("&&"):
        ts.next()
        g = GAnd(g, _parse_guard_atom(ts))
    return g


def _parse_guard_atom(ts):
    kind, v, line, col = ts.peek()
    if v == "true":
        ts.next()
        return GTrue()
    if v == "false":
        ts.next()
        return GFalse()
    if v == "!":
        ts.next()
        return GNot(_parse_guard_atom(ts))
    if v == "(":
        ts.next()
        g = _parse_guard(ts)
        ts.expect(")")
        return g
    if kind == "ident" and v not in KEYWORDS:
        name = ts.next()[1]
        if ts.at("%"):
            ts.next()
            k2, m, l2, c2 = ts.next()
            if k2 != "num":
                raise ParseError("expected modulus", l2, c2)
            ts.expect("=")
            k3, r, l3, c3 = ts.next()
            if k3 != "num":
                raise ParseError("expected residue", l3, c3)
            return VarModConst(name, int(r), int(m))
        op = ts.peek()[1]
        if op not in gf.CMP_OPS:
            ts.error("expected a comparison operator")
        ts.next()
        k2, rhs, l2, c2 = ts.next()
        if k2 == "num":
            return VarCmpConst(name, op, int(rhs))
        if k2 == "ident" and rhs not in KEYWORDS:
            return VarCmpVar(name, op, rhs)
        raise ParseError("expected a constant or variable", l2, c2)
    ts.error("expected a guard")


def _collect_decls(decls, body):
    seen = list(decls)

    def note(name):
        if name not in seen:
            seen.append(name)

    def walk_aexpr(e):
        if isinstance(e, VarRef):
            note(e.name)
        elif isinstance(e, BinOp):
            walk_aexpr(e.lhs)
            walk_aexpr(e.rhs)

    def walk(stmts):
        for s in stmts:
            if isinstance(s, Assign):
                note(s.var)
                walk_aexpr(s.expr)
            elif isinstance(s, Sample):
                note(s.var)
            elif isinstance(s, IidIncr):
                note(s.var)
                note(s.count_var)
            elif isinstance(s, PChoice):
                walk(s.left)
                walk(s.right)
            elif isinstance(s, IfElse):
                for v in sorted(gf.guard_variables(s.guard)):
                    note(v)
                walk(s.then)
                walk(s.els)
            elif isinstance(s, While):
                for v in sorted(gf.guard_variables(s.guard)):
                    note(v)
                walk(s.body)
            elif isinstance(s, Observe):
                for v in sorted(gf.guard_variables(s.guard)):
                    note(v)

    walk(body)
    return tuple(seen)


def program_of(stmts, decls=()) -> Program:
    """Build a Program from statements, auto-collecting declarations."""
    stmts = tuple(stmts)
    return Program(_collect_decls(list(decls), stmts), stmts)


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------


def pretty_print(p: Program) -> str:
    lines = [f"nat {v};" for v in p.decls]
    _pp_stmts(p.body, lines, "")
    return "\n".join(lines) + "\n"


def _pp_stmts(stmts, lines, ind):
    for s in stmts:
        _pp_stmt(s, lines, ind)


def _pp_stmt(s, lines, ind):
    if isinstance(s, Skip):
        lines.append(ind + "skip;")
    elif isinstance(s, Assign):
        lines.append(ind + f"{s.var} := {_pp_aexpr(s.expr)};")
    elif isinstance(s, Sample):
        lines.append(ind + f"{s.var} := {s.dist};")
    elif isinstance(s, IidIncr):
        lines.append(ind + f"{s.var} += iid({s.dist}, {s.count_var});")
    elif isinstance(s, PChoice):
        lines.append(ind + "{")
        _pp_stmts(s.left, lines, ind + "    ")
        lines.append(ind + "} " + f"[{_param_str(s.prob)}] " + "{")
        _pp_stmts(s.right, lines, ind + "    ")
        lines.append(ind + "}")
    elif isinstance(s, IfElse):
        lines.append(ind + f"if ({s.guard}) " + "{")
        _pp_stmts(s.then, lines, ind + "    ")
        if s.els:
            lines.append(ind + "} else {")
            _pp_stmts(s.els, lines, ind + "    ")
        lines.append(ind + "}")
    elif isinstance(s, While):
        lines.append(ind + f"while ({s.guard}) " + "{")
        _pp_stmts(s.body, lines, ind + "    ")
        lines.append(ind + "}")
    elif isinstance(s, Observe):
        lines.append(ind + f"observe({s.guard});")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _pp_aexpr(e):
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, BinOp):
        rhs = _pp_aexpr(e.rhs)
        if isinstance(e.rhs, BinOp):
            rhs = f"({rhs})"
        return f"{_pp_aexpr(e.lhs)} {e.op} {rhs}"
    raise TypeError(f"not an arithmetic expression: {e!r}")


# ---------------------------------------------------------------------------
# Fragment validation
# ---------------------------------------------------------------------------


def classify_assignment(s):
    """Map an Assign/Sample/IidIncr onto its closed-form rule, if any.

    Returns a (tag, ...) tuple or None when unsupported:
      ("const", n) | ("incr", n) | ("decr", n) | ("addvar", y) | ("copy", y)
    """
    if not isinstance(s, Assign):
        return None
    e = s.expr
    if isinstance(e, Const):
        return ("const", e.value)
    if isinstance(e, VarRef):
        if e.name == s.var:
            return ("incr", 0)
        return ("copy", e.name)
    if isinstance(e, BinOp):
        l, r = e.lhs, e.rhs
        if e.op == "+":
            if isinstance(l, VarRef) and l.name == s.var and isinstance(r, Const):
                return ("incr", r.value)
            if isinstance(r, VarRef) and r.name == s.var and isinstance(l, Const):
                return ("incr", l.value)
            if (isinstance(l, VarRef) and l.name == s.var
                    and isinstance(r, VarRef) and r.name != s.var):
                return ("addvar", r.name)
            if (isinstance(r, VarRef) and r.name == s.var
                    and isinstance(l, VarRef) and l.name != s.var):
                return ("addvar", l.name)
        if e.op == "-":
            if isinstance(l, VarRef) and l.name == s.var and isinstance(r, Const):
                return ("decr", r.value)
    return None


def _guard_rectangular(g):
    """Guards computable on arbitrary (infinite-support) closed forms."""
    if isinstance(g, (GTrue, GFalse, VarCmpConst)):
        return True
    if isinstance(g, VarModConst):
        return g.modulus == 2
    if isinstance(g, VarCmpVar):
        return False
    if isinstance(g, (GAnd, GOr)):
        return _guard_rectangular(g.lhs) and _guard_rectangular(g.rhs)
    if isinstance(g, GNot):
        return _guard_rectangular(g.inner)
    return False


def validate(p: Program) -> FragmentReport:
    problems = []
    loop_free = True

    def walk(stmts):
        nonlocal loop_free
        for s in stmts:
            if isinstance(s, Assign):
                if classify_assignment(s) is None:
                    problems.append((s.loc, "assignment has no closed-form rule "
                                     f"({s.var} := {_pp_aexpr(s.expr)})"))
            elif isinstance(s, IidIncr):
                if s.var == s.count_var:
                    problems.append((s.loc, "iid target and count variable "
                                     "must differ"))
            elif isinstance(s, PChoice):
                walk(s.left)
                walk(s.right)
            elif isinstance(s, IfElse):
                if not _guard_rectangular(s.guard):
                    problems.append((s.loc, f"non-rectangular guard {s.guard}"))
                walk(s.then)
                walk(s.els)
            elif isinstance(s, While):
                loop_free = False
                if not _guard_rectangular(s.guard):
                    problems.append((s.loc, f"non-rectangular guard {s.guard}"))
                walk(s.body)
            elif isinstance(s, Observe):
                if not _guard_rectangular(s.guard):
                    problems.append((s.loc, f"non-rectangular guard {s.guard}"))

    walk(p.body)
    return FragmentReport(loop_free=loop_free, credip=not problems,
                          unsupported=tuple(problems))


# ---------------------------------------------------------------------------
# Expression parser (priors, round-tripping rendered closed forms)
# ---------------------------------------------------------------------------


def parse_expr(text: str, parameters=()) -> SymExpr:
    """Parse the textual expression syntax into a SymExpr.

    Identifiers become program indeterminates, unless listed in
    `parameters` or prefixed with `$` (meta-indeterminates).
    """
    ts = _Tokens(text)
    e = _expr_sum(ts, frozenset(parameters))
    if ts.peek()[0] != "eof":
        ts.error("unexpected trailing input in expression")
    return e


def _expr_sum(ts, params):
    e = _expr_product(ts, params)
    while ts.peek()[1] in ("+", "-"):
        op = ts.next()[1]
        rhs = _expr_product(ts, params)
        e = e + rhs if op == "+" else e - rhs
    return e


def _expr_product(ts, params):
    e = _expr_unary(ts, params)
    while ts.peek()[1] in ("*", "/"):
        op = ts.next()[1]
        rhs = _expr_unary(ts, params)
        e = e * rhs if op == "*" else e.divide(rhs)
    return e


def _expr_unary(ts, params):
    if ts.at("-"):
        ts.next()
        return -_expr_unary(ts, params)
    return _expr_power(ts, params)


def _expr_power(ts, params):
    base = _expr_atom(ts, params)
    if ts.at("^"):
        ts.next()
        neg = False
        if ts.at("-"):
            ts.next()
            neg = True
        kind, v, line, col = ts.next()
        if kind != "num":
            raise ParseError("expected an integer exponent", line, col)
        n = int(v)
        out = base ** n
        if neg:
            out = SX_ONE.divide(out)
        return out
    return base


def _expr_atom(ts, params):
    kind, v, line, col = ts.peek()
    if kind == "num":
        ts.next()
        return SymExpr.const(int(v))
    if v == "(":
        ts.next()
        e = _expr_sum(ts, params)
        ts.expect(")")
        return e
    if v == "exp":
        ts.next()
        ts.expect("(")
        arg = _expr_sum(ts, params)
        ts.expect(")")
        r = arg.single_ratfn()
        if r is None or r.den != Poly.const(1):
            raise ParseError("exp argument must be polynomial", line, col)
        return SymExpr.exp_of(r.num)
    if kind == "ident":
        ts.next()
        if v.startswith("$"):
            ind = Indeterminate(v, META)
        elif v in params:
            ind = Indeterminate(v, PARAMETER)
        else:
            ind = Indeterminate(v, PROGRAM)
        return SymExpr.var(ind)
    ts.error("expected an expression atom")
