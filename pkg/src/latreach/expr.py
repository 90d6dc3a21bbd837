"""Arithmetic and comparison expressions.

The same small AST is shared by the program parser, the concrete
interpreter and the abstract domains.  Expressions are pure data; every
evaluator lives with its own number representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class Const:
    value: Fraction

    def __str__(self) -> str:
        if self.value.denominator == 1:
            return str(self.value.numerator)
        return f"({self.value.numerator} / {self.value.denominator})"


@dataclass(frozen=True)
class Var:
    """A program variable; the reserved name ``id`` is the process identifier."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class PosVar:
    """Variable of the letter matched at a given position of a rewrite rule.

    Never produced by the surface parser; rule generators build these so a
    rewriter can mention its communication partner's environment.
    """

    pos: int
    name: str

    def __str__(self) -> str:
        return f"@{self.pos}.{self.name}"


@dataclass(frozen=True)
class NProcs:
    """Compile-time process count; only legal under a fixed --procs n."""

    def __str__(self) -> str:
        return "nprocs"


@dataclass(frozen=True)
class FreshId:
    """Identifier handed out by a create step; resolved at rule application."""

    def __str__(self) -> str:
        return "fresh_id"


@dataclass(frozen=True)
class IntervalConst:
    """A range of possible values (integral); bounds are Fractions or the
    float infinities.  Built only while resolving FreshId, never parsed."""

    lo: object
    hi: object

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def __str__(self) -> str:
        return f"(- {self.arg})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        if self.op in ("min", "max"):
            return f"{self.op}({self.left}, {self.right})"
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Nondet:
    """The ``*`` condition: both branches of the test are possible."""

    def __str__(self) -> str:
        return "*"


Expr = object  # Const | Var | PosVar | NProcs | FreshId | Neg | BinOp | Nondet

COMPARISONS = ("<", "<=", "==", "!=", ">=", ">")
ARITH_OPS = ("+", "-", "*", "/", "%", "^")


def is_comparison(e) -> bool:
    return isinstance(e, BinOp) and e.op in COMPARISONS


NEGATED = {"<": ">=", "<=": ">", "==": "!=", "!=": "==", ">=": "<", ">": "<="}


def negate_comparison(e: BinOp) -> BinOp:
    return BinOp(NEGATED[e.op], e.left, e.right)


def free_vars(e) -> set:
    """Names of Var atoms (PosVar excluded; it names another letter's frame)."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    return set()


def substitute_nprocs(e, n: int):
    if isinstance(e, NProcs):
        return Const(Fraction(n))
    if isinstance(e, Neg):
        return Neg(substitute_nprocs(e.arg, n))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute_nprocs(e.left, n), substitute_nprocs(e.right, n))
    return e


def uses_nprocs(e) -> bool:
    if isinstance(e, NProcs):
        return True
    if isinstance(e, Neg):
        return uses_nprocs(e.arg)
    if isinstance(e, BinOp):
        return uses_nprocs(e.left) or uses_nprocs(e.right)
    return False


def to_affine(e):
    """Write e as sum(coeff * atom) + const, or None if that is impossible.

    Atoms are Var/PosVar occurrences; the result is (dict atom -> Fraction,
    Fraction constant).
    """
    if isinstance(e, Const):
        return {}, e.value
    if isinstance(e, (Var, PosVar)):
        return {e: Fraction(1)}, Fraction(0)
    if isinstance(e, Neg):
        aff = to_affine(e.arg)
        if aff is None:
            return None
        coeffs, c = aff
        return {a: -k for a, k in coeffs.items()}, -c
    if isinstance(e, BinOp) and e.op in ("+", "-"):
        lhs = to_affine(e.left)
        rhs = to_affine(e.right)
        if lhs is None or rhs is None:
            return None
        lc, lk = lhs
        rc, rk = rhs
        sign = 1 if e.op == "+" else -1
        merged = dict(lc)
        for a, k in rc.items():
            merged[a] = merged.get(a, Fraction(0)) + sign * k
        merged = {a: k for a, k in merged.items() if k != 0}
        return merged, lk + sign * rk
    if isinstance(e, BinOp) and e.op == "*":
        lhs = to_affine(e.left)
        rhs = to_affine(e.right)
        if lhs is None or rhs is None:
            return None
        lc, lk = lhs
        rc, rk = rhs
        if not lc:  # constant * affine
            return {a: lk * k for a, k in rc.items() if lk * k != 0}, lk * rk
        if not rc:
            return {a: rk * k for a, k in lc.items() if rk * k != 0}, lk * rk
        return None
    if isinstance(e, BinOp) and e.op == "/":
        rhs = to_affine(e.right)
        if rhs is None or rhs[0]:
            return None
        divisor = rhs[1]
        if divisor == 0:
            return None
        lhs = to_affine(e.left)
        if lhs is None:
            return None
        lc, lk = lhs
        return {a: k / divisor for a, k in lc.items()}, lk / divisor
    return None


def map_vars(e, fn):
    """Replace every Var atom by fn(name) (an expression)."""
    if isinstance(e, Var):
        return fn(e.name)
    if isinstance(e, Neg):
        return Neg(map_vars(e.arg, fn))
    if isinstance(e, BinOp):
        return BinOp(e.op, map_vars(e.left, fn), map_vars(e.right, fn))
    return e


def at_position(e, pos: int):
    """Move every Var of e into the frame of the letter matched at pos."""
    return map_vars(e, lambda name: PosVar(pos, name))


def to_source(e) -> str:
    """Deterministic, re-parseable surface form (PosVar/FreshId excluded
    from the surface grammar but kept readable for dumps)."""
    return str(e)
