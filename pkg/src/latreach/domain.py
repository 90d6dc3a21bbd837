"""Abstract lattices for local process states.

A letter of the word alphabet bundles the process-identifier interval, a
control location and a numeric environment.  Two environment domains are
provided: non-relational intervals and affine equalities (conjunctions of
exact linear equations, closed under affine hull).  All values are
immutable; every operation is a pure function, so letters are safe to
share between threads.

Scalars are exact rationals throughout; interval endpoints extend them
with two infinities.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from . import expr as E

NEG_INF = float("-inf")
POS_INF = float("inf")

# ---------------------------------------------------------------------------
# bounds


def is_finite(b) -> bool:
    return not isinstance(b, float)


def bound_add(a, b):
    if a in (NEG_INF, POS_INF):
        return a
    if b in (NEG_INF, POS_INF):
        return b
    return a + b


def bound_neg(a):
    if a == NEG_INF:
        return POS_INF
    if a == POS_INF:
        return NEG_INF
    return -a


def bound_mul(a, b):
    # 0 * inf = 0: correct for products of closed interval endpoints.
    if a == 0 or b == 0:
        return Fraction(0)
    if a in (NEG_INF, POS_INF) or b in (NEG_INF, POS_INF):
        positive = (a > 0) == (b > 0)
        return POS_INF if positive else NEG_INF
    return a * b


def bound_key(b):
    """Sort key usable alongside Fractions."""
    if b == NEG_INF:
        return (-1, Fraction(0))
    if b == POS_INF:
        return (1, Fraction(0))
    return (0, b)


def _trunc(q: Fraction) -> Fraction:
    return Fraction(int(q))  # int() truncates toward zero, as C does


def bound_trunc(b):
    if isinstance(b, float):
        return b
    return _trunc(b)


# ---------------------------------------------------------------------------
# intervals


@dataclass(frozen=True)
class Interval:
    """Closed rational interval; the empty interval is canonically
    (+inf, -inf) so that equality and hashing see a single bottom."""

    lo: object = NEG_INF
    hi: object = POS_INF

    def __post_init__(self):
        if self.lo > self.hi and not (self.lo == POS_INF and self.hi == NEG_INF):
            object.__setattr__(self, "lo", POS_INF)
            object.__setattr__(self, "hi", NEG_INF)

    # -- constructors
    @staticmethod
    def top() -> "Interval":
        return Interval(NEG_INF, POS_INF)

    @staticmethod
    def bottom() -> "Interval":
        return Interval(POS_INF, NEG_INF)

    @staticmethod
    def point(q) -> "Interval":
        q = Fraction(q)
        return Interval(q, q)

    @staticmethod
    def range(lo, hi) -> "Interval":
        lo = lo if isinstance(lo, float) else Fraction(lo)
        hi = hi if isinstance(hi, float) else Fraction(hi)
        return Interval(lo, hi)

    # -- predicates
    @property
    def is_bottom(self) -> bool:
        return self.lo == POS_INF and self.hi == NEG_INF

    @property
    def is_top(self) -> bool:
        return self.lo == NEG_INF and self.hi == POS_INF

    @property
    def is_point(self) -> bool:
        return is_finite(self.lo) and self.lo == self.hi

    def contains(self, q) -> bool:
        return not self.is_bottom and self.lo <= q <= self.hi

    # -- lattice
    def leq(self, other: "Interval") -> bool:
        if self.is_bottom:
            return True
        if other.is_bottom:
            return False
        return other.lo <= self.lo and self.hi <= other.hi

    def join(self, other: "Interval") -> "Interval":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return Interval.bottom()
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def widen(self, other: "Interval") -> "Interval":
        up = self.join(other)  # guarantee an upper bound of both arguments
        if self.is_bottom:
            return up
        lo = self.lo if up.lo >= self.lo else NEG_INF
        hi = self.hi if up.hi <= self.hi else POS_INF
        return Interval(lo, hi)

    # -- arithmetic (outward exact)
    def add(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return Interval.bottom()
        return Interval(bound_add(self.lo, other.lo), bound_add(self.hi, other.hi))

    def neg(self) -> "Interval":
        if self.is_bottom:
            return Interval.bottom()
        return Interval(bound_neg(self.hi), bound_neg(self.lo))

    def sub(self, other: "Interval") -> "Interval":
        return self.add(other.neg())

    def mul(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return Interval.bottom()
        corners = [bound_mul(a, b) for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Interval(min(corners, key=bound_key), max(corners, key=bound_key))

    def inverse(self) -> "Interval":
        """1/x for an interval not containing 0."""
        assert not self.contains(0)
        lo = Fraction(0) if self.hi in (NEG_INF, POS_INF) else 1 / self.hi
        hi = Fraction(0) if self.lo in (NEG_INF, POS_INF) else 1 / self.lo
        if self.lo > 0 or self.hi < 0:
            return Interval(lo, hi)
        return Interval.top()

    def shift(self, q) -> "Interval":
        return self.add(Interval.point(q))

    def truncate(self) -> "Interval":
        """Image under C-style truncation toward zero (monotone)."""
        if self.is_bottom:
            return self
        return Interval(bound_trunc(self.lo), bound_trunc(self.hi))

    def integral_tighten(self) -> "Interval":
        """Shrink to the hull of the contained integers."""
        if self.is_bottom:
            return self
        import math

        lo = self.lo if isinstance(self.lo, float) else Fraction(math.ceil(self.lo))
        hi = self.hi if isinstance(self.hi, float) else Fraction(math.floor(self.hi))
        return Interval(lo, hi)

    def sort_key(self):
        return (bound_key(self.lo), bound_key(self.hi))

    def __str__(self) -> str:
        if self.is_bottom:
            return "bot"
        lo = "-inf" if self.lo == NEG_INF else str(self.lo)
        hi = "+inf" if self.hi == POS_INF else str(self.hi)
        return f"[{lo},{hi}]"


# ---------------------------------------------------------------------------
# interval environments


@dataclass(frozen=True)
class IntervalEnv:
    """Map variable -> interval; missing variables are unconstrained.

    A variable bound to the empty interval never appears here: operations
    that would produce one return None (the whole environment is bottom).
    """

    items: tuple = ()

    @staticmethod
    def top() -> "IntervalEnv":
        return IntervalEnv(())

    @staticmethod
    def make(mapping) -> Optional["IntervalEnv"]:
        out = []
        for name in sorted(mapping):
            itv = mapping[name]
            if itv.is_bottom:
                return None
            if not itv.is_top:
                out.append((name, itv))
        return IntervalEnv(tuple(out))

    def as_dict(self) -> dict:
        return dict(self.items)

    def get(self, name: str) -> Interval:
        for n, itv in self.items:
            if n == name:
                return itv
        return Interval.top()

    def set(self, name: str, itv: Interval) -> Optional["IntervalEnv"]:
        if itv.is_bottom:
            return None
        d = self.as_dict()
        d[name] = itv
        return IntervalEnv.make(d)

    def leq(self, other: "IntervalEnv") -> bool:
        return all(self.get(n).leq(itv) for n, itv in other.items)

    def join(self, other: "IntervalEnv") -> "IntervalEnv":
        names = {n for n, _ in self.items} & {n for n, _ in other.items}
        return IntervalEnv.make({n: self.get(n).join(other.get(n)) for n in names})

    def meet(self, other: "IntervalEnv") -> Optional["IntervalEnv"]:
        names = {n for n, _ in self.items} | {n for n, _ in other.items}
        d = {}
        for n in names:
            m = self.get(n).meet(other.get(n))
            if m.is_bottom:
                return None
            d[n] = m
        return IntervalEnv.make(d)

    def widen(self, other: "IntervalEnv") -> "IntervalEnv":
        names = {n for n, _ in self.items} & {n for n, _ in other.items}
        return IntervalEnv.make({n: self.get(n).widen(other.get(n)) for n in names})

    def sort_key(self):
        return tuple((n, itv.sort_key()) for n, itv in self.items)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{n}={itv}" for n, itv in self.items) + "}"


# ---------------------------------------------------------------------------
# affine-equality environments (Karr's domain, equalities only)


def _rref(rows):
    """Reduced row echelon form over exact rationals.

    rows: list of (coeffs: dict name->Fraction, const: Fraction).
    Returns the canonical list sorted by pivot, or None when the system is
    inconsistent.  Column order is the sorted variable names.
    """
    work = [({n: Fraction(k) for n, k in coeffs.items() if k != 0}, Fraction(c)) for coeffs, c in rows]
    pivots = []  # (name, row) in elimination order
    for coeffs, c in work:
        coeffs = dict(coeffs)
        # reduce against existing pivot rows
        for name, (prow, pc) in pivots:
            k = coeffs.get(name)
            if k:
                for n2, k2 in prow.items():
                    coeffs[n2] = coeffs.get(n2, Fraction(0)) - k * k2
                    if coeffs[n2] == 0:
                        del coeffs[n2]
                c = c - k * pc
        if not coeffs:
            if c != 0:
                return None
            continue
        pivot = sorted(coeffs)[0]
        inv = 1 / coeffs[pivot]
        coeffs = {n: k * inv for n, k in coeffs.items()}
        c = c * inv
        # back-substitute into previous rows
        new_pivots = []
        for name, (prow, pc) in pivots:
            k = prow.get(pivot)
            if k:
                prow = dict(prow)
                for n2, k2 in coeffs.items():
                    prow[n2] = prow.get(n2, Fraction(0)) - k * k2
                    if prow[n2] == 0:
                        del prow[n2]
                pc = pc - k * c
            new_pivots.append((name, (prow, pc)))
        pivots = new_pivots
        pivots.append((pivot, (coeffs, c)))
    pivots.sort(key=lambda item: item[0])
    return [(row, c) for _, (row, c) in pivots]


@dataclass(frozen=True)
class AffineEnv:
    """Conjunction of affine equalities over the program variables plus id.

    rows are in reduced row echelon form, so two environments describe the
    same affine subspace exactly when they are equal.  The unsatisfiable
    system is represented by operations returning None.
    """

    vars: tuple
    rows: tuple = ()  # tuple of (coeff-tuple aligned with vars, const)

    @staticmethod
    def top(vars) -> "AffineEnv":
        return AffineEnv(tuple(vars), ())

    @staticmethod
    def from_rows(vars, dict_rows) -> Optional["AffineEnv"]:
        vars = tuple(vars)
        reduced = _rref(dict_rows)
        if reduced is None:
            return None
        rows = tuple(
            (tuple(coeffs.get(v, Fraction(0)) for v in vars), c) for coeffs, c in reduced
        )
        return AffineEnv(vars, rows)

    def dict_rows(self):
        return [
            ({v: k for v, k in zip(self.vars, coeffs) if k != 0}, c)
            for coeffs, c in self.rows
        ]

    # -- queries
    def entails(self, coeffs: dict, const: Fraction) -> bool:
        """Does every point of the subspace satisfy sum(coeffs) = const?"""
        reduced = _rref(self.dict_rows() + [(coeffs, const)])
        if reduced is None:
            return False
        return len(reduced) == len(self.rows)

    def refutes(self, coeffs: dict, const: Fraction) -> bool:
        """Is sum(coeffs) = const false at every point? (i.e. the system
        entails sum(coeffs) = c' for a single c' != const)"""
        val = self.value_of(coeffs)
        return val is not None and val != const

    def value_of(self, coeffs: dict):
        """The constant value of the linear form, if the system pins it."""
        work = dict(coeffs)
        c = Fraction(0)
        for row, rc in self.dict_rows():
            pivot = sorted(row)[0]
            k = work.get(pivot)
            if k:
                for n2, k2 in row.items():
                    work[n2] = work.get(n2, Fraction(0)) - k * k2
                    if work[n2] == 0:
                        del work[n2]
                c -= k * rc
        if work:
            return None
        return -c

    def constant(self, name: str):
        return self.value_of({name: Fraction(1)})

    def satisfies(self, assignment: dict) -> bool:
        for coeffs, c in self.rows:
            total = sum(k * Fraction(assignment[v]) for v, k in zip(self.vars, coeffs) if k != 0)
            if total != c:
                return False
        return True

    # -- lattice
    def leq(self, other: "AffineEnv") -> bool:
        return all(self.entails(coeffs, c) for coeffs, c in other.dict_rows())

    def meet(self, other: "AffineEnv") -> Optional["AffineEnv"]:
        return AffineEnv.from_rows(self.vars, self.dict_rows() + other.dict_rows())

    def _generators(self):
        """(particular point, basis of the direction space) as dicts."""
        rows = self.dict_rows()
        pivots = {sorted(coeffs)[0] for coeffs, _ in rows}
        free = [v for v in self.vars if v not in pivots]
        point = {v: Fraction(0) for v in self.vars}
        for coeffs, c in rows:
            point[sorted(coeffs)[0]] = c  # free vars at 0
        basis = []
        for f in free:
            vec = {v: Fraction(0) for v in self.vars}
            vec[f] = Fraction(1)
            for coeffs, _ in rows:
                pivot = sorted(coeffs)[0]
                vec[pivot] = -coeffs.get(f, Fraction(0))
            basis.append(vec)
        return point, basis

    def join(self, other: "AffineEnv") -> "AffineEnv":
        """Affine hull: the least affine subspace containing both."""
        p1, b1 = self._generators()
        p2, b2 = other._generators()
        span = b1 + b2 + [{v: p2[v] - p1[v] for v in self.vars}]
        # Constraint rows are the left nullspace of the span: solve
        # span . a = 0 for the coefficient vector a (one unknown per var).
        sys_rows = []
        for vec in span:
            coeffs = {v: vec[v] for v in self.vars if vec[v] != 0}
            if coeffs:
                sys_rows.append((coeffs, Fraction(0)))
        reduced = _rref(sys_rows)
        pivots = {sorted(coeffs)[0] for coeffs, _ in reduced}
        free = [v for v in self.vars if v not in pivots]
        out_rows = []
        for f in free:
            a = {v: Fraction(0) for v in self.vars}
            a[f] = Fraction(1)
            for coeffs, _ in reduced:
                a[sorted(coeffs)[0]] = -coeffs.get(f, Fraction(0))
            const = sum(a[v] * p1[v] for v in self.vars)
            out_rows.append(({v: k for v, k in a.items() if k != 0}, const))
        env = AffineEnv.from_rows(self.vars, out_rows)
        assert env is not None
        return env

    def widen(self, other: "AffineEnv") -> "AffineEnv":
        return self.join(other)  # finite height in the number of variables

    # -- transformers
    def project_out(self, name: str) -> "AffineEnv":
        rows = []
        eliminator = None
        for coeffs, c in self.dict_rows():
            if coeffs.get(name):
                if eliminator is None:
                    eliminator = (coeffs, c)
                    continue
                ecoeffs, ec = eliminator
                k = coeffs[name] / ecoeffs[name]
                merged = dict(coeffs)
                for n2, k2 in ecoeffs.items():
                    merged[n2] = merged.get(n2, Fraction(0)) - k * k2
                    if merged[n2] == 0:
                        del merged[n2]
                rows.append((merged, c - k * ec))
            else:
                rows.append((coeffs, c))
        env = AffineEnv.from_rows(self.vars, rows)
        assert env is not None
        return env

    def assign_affine(self, name: str, coeffs: dict, const: Fraction) -> "AffineEnv":
        """name := sum(coeffs) + const, exact Karr assignment."""
        tmp = "\x00tmp"
        sys = _LinSys()
        for row, c in self.dict_rows():
            sys.add_row(row, c)
        row = dict(coeffs)
        row[tmp] = row.get(tmp, Fraction(0)) - 1
        sys.add_row(row, -const)
        sys.project_out(name)
        sys.rename(tmp, name)
        return sys.to_env(self.vars)

    def havoc(self, name: str) -> "AffineEnv":
        return self.project_out(name)

    def sort_key(self):
        return tuple((coeffs, c) for coeffs, c in self.rows)

    def __str__(self) -> str:
        parts = []
        for coeffs, c in self.rows:
            terms = [
                (f"{k}*{v}" if k != 1 else v)
                for v, k in zip(self.vars, coeffs)
                if k != 0
            ]
            parts.append(" + ".join(terms) + f" = {c}")
        return "{" + "; ".join(parts) + "}"


class _LinSys:
    """Mutable helper for relational computations over several letters."""

    def __init__(self):
        self.rows = []  # (dict, const)
        self.inconsistent = False

    def add_row(self, coeffs: dict, const) -> None:
        self.rows.append((dict(coeffs), Fraction(const)))

    def add_env(self, tag: str, env: AffineEnv) -> None:
        for coeffs, c in env.dict_rows():
            self.add_row({f"{tag}.{n}": k for n, k in coeffs.items()}, c)

    def reduce(self) -> bool:
        reduced = _rref(self.rows)
        if reduced is None:
            self.inconsistent = True
            return False
        self.rows = reduced
        return True

    def project_out(self, name: str) -> None:
        if not self.reduce():
            return
        rows = []
        eliminator = None
        for coeffs, c in self.rows:
            if coeffs.get(name):
                if eliminator is None:
                    eliminator = (coeffs, c)
                    continue
                ecoeffs, ec = eliminator
                k = coeffs[name] / ecoeffs[name]
                merged = dict(coeffs)
                for n2, k2 in ecoeffs.items():
                    merged[n2] = merged.get(n2, Fraction(0)) - k * k2
                    if merged[n2] == 0:
                        del merged[n2]
                rows.append((merged, c - k * ec))
            else:
                rows.append((coeffs, c))
        self.rows = rows

    def rename(self, old: str, new: str) -> None:
        self.rows = [
            ({(new if n == old else n): k for n, k in coeffs.items()}, c)
            for coeffs, c in self.rows
        ]

    def to_env(self, vars) -> Optional[AffineEnv]:
        if not self.reduce():
            return None
        return AffineEnv.from_rows(vars, self.rows)

    def project_to_tag(self, tag: str, vars) -> Optional[AffineEnv]:
        """Existentially eliminate every column outside tag, then untag."""
        if not self.reduce():
            return None
        prefix = f"{tag}."
        foreign = sorted({n for coeffs, _ in self.rows for n in coeffs if not n.startswith(prefix)})
        for name in foreign:
            self.project_out(name)
        if not self.reduce():
            return None
        rows = [
            ({n[len(prefix):]: k for n, k in coeffs.items()}, c)
            for coeffs, c in self.rows
        ]
        return AffineEnv.from_rows(vars, rows)

    def value_of(self, coeffs: dict):
        if not self.reduce():
            return None
        env = AffineEnv.from_rows(tuple(sorted({n for r, _ in self.rows for n in r} | set(coeffs))),
                                  self.rows)
        if env is None:
            return None
        return env.value_of(coeffs)


Env = Union[IntervalEnv, AffineEnv]


# ---------------------------------------------------------------------------
# letters


@dataclass(frozen=True)
class AbstractLocalState:
    """One letter of the word alphabet: (id interval, location, environment).

    The location is always a single partition class; bottom letters are
    represented by None wherever an operation can produce them.
    """

    pid: Interval
    loc: str
    env: Env

    def __post_init__(self):
        assert not self.pid.is_bottom

    def with_env(self, env) -> Optional["AbstractLocalState"]:
        if env is None:
            return None
        return AbstractLocalState(self.pid, self.loc, env)

    def with_pid(self, pid: Interval) -> Optional["AbstractLocalState"]:
        if pid.is_bottom:
            return None
        return AbstractLocalState(pid, self.loc, self.env)

    def relocate(self, loc: str) -> "AbstractLocalState":
        return AbstractLocalState(self.pid, loc, self.env)

    def sort_key(self):
        return (loc_sort_key(self.loc), self.pid.sort_key(), self.env.sort_key())

    def __str__(self) -> str:
        return f"<id={self.pid} {self.loc} {self.env}>"


def loc_sort_key(loc: str):
    """Stable ordering for location names like l7, l2_lock, l2_coll."""
    base, _, suffix = loc.partition("_")
    idx = int(base[1:]) if base.startswith("l") and base[1:].isdigit() else -1
    return (idx, suffix, loc)


def letter_leq(a: AbstractLocalState, b: AbstractLocalState) -> bool:
    return a.loc == b.loc and a.pid.leq(b.pid) and a.env.leq(b.env)


def letter_join(a: AbstractLocalState, b: AbstractLocalState) -> AbstractLocalState:
    assert a.loc == b.loc
    return AbstractLocalState(a.pid.join(b.pid), a.loc, a.env.join(b.env))


def letter_meet(a: AbstractLocalState, b: AbstractLocalState) -> Optional[AbstractLocalState]:
    if a.loc != b.loc:
        return None
    pid = a.pid.meet(b.pid)
    if pid.is_bottom:
        return None
    env = a.env.meet(b.env)
    if env is None:
        return None
    return AbstractLocalState(pid, a.loc, env)


def letter_widen(a: AbstractLocalState, b: AbstractLocalState) -> AbstractLocalState:
    assert a.loc == b.loc
    return AbstractLocalState(a.pid.widen(b.pid), a.loc, a.env.widen(b.env))


# ---------------------------------------------------------------------------
# guards


@dataclass(frozen=True)
class Constraint:
    """Symbolic side constraint of a guard: <lhs> <op> <expr>.

    lhs is "id" or a variable name; the expression ranges over id, the
    letter's own variables and constants.  Used by property automata and
    the broadcast root guard.
    """

    lhs: str
    op: str
    rhs: object  # expr AST

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class GuardAtom:
    """Per-location payload of a guard element."""

    pid: Interval = field(default_factory=Interval.top)
    env: Optional[Env] = None  # None = top
    constraints: tuple = ()


@dataclass(frozen=True)
class GuardElement:
    """Join of per-location constraints; unlike letters, a guard may span
    several partition classes (or all of them).

    by_loc None means "any location" with the shared default atom.
    """

    by_loc: Optional[tuple] = None  # tuple of (loc, GuardAtom)
    default: Optional[GuardAtom] = None

    @staticmethod
    def top() -> "GuardElement":
        return GuardElement(None, GuardAtom())

    @staticmethod
    def at(loc: str, atom: GuardAtom = GuardAtom()) -> "GuardElement":
        return GuardElement(((loc, atom),), None)

    @staticmethod
    def anywhere(atom: GuardAtom) -> "GuardElement":
        return GuardElement(None, atom)

    def atom_for(self, loc: str) -> Optional[GuardAtom]:
        if self.by_loc is None:
            return self.default
        for l, atom in self.by_loc:
            if l == loc:
                return atom
        return None

    def __str__(self) -> str:
        if self.by_loc is None:
            return "<any>" if self.default == GuardAtom() else f"<any:{self.default}>"
        return "|".join(l for l, _ in self.by_loc)


TOP_GUARD = GuardElement.top()


# ---------------------------------------------------------------------------
# domain context and transfer functions


@dataclass(frozen=True)
class DomainContext:
    """Program-level configuration shared by all letters of one analysis."""

    kind: str  # "interval" | "affine"
    variables: tuple
    rat_vars: frozenset = frozenset()

    def affine_vars(self) -> tuple:
        return tuple(sorted(set(self.variables) | {"id"}))

    def is_int(self, name: str) -> bool:
        return name == "id" or name not in self.rat_vars

    def top_env(self) -> Env:
        if self.kind == "affine":
            return AffineEnv.top(self.affine_vars())
        return IntervalEnv.top()

    def zero_env(self, pid: Interval) -> Env:
        if self.kind == "affine":
            rows = [({v: Fraction(1)}, Fraction(0)) for v in self.variables]
            if pid.is_point:
                rows.append(({"id": Fraction(1)}, Fraction(pid.lo)))
            env = AffineEnv.from_rows(self.affine_vars(), rows)
            assert env is not None
            return env
        return IntervalEnv.make({v: Interval.point(0) for v in self.variables})

    def zero_letter(self, pid: Interval, loc: str) -> AbstractLocalState:
        return AbstractLocalState(pid, loc, self.zero_env(pid))


class AlarmSink:
    """Collects division alarms raised inside transfer functions."""

    def __init__(self):
        self.alarms = set()

    def division(self, where: str) -> None:
        self.alarms.add(("division", where))


def eval_interval(ctx: DomainContext, letter: AbstractLocalState, e, sink=None,
                  resolver=None) -> Interval:
    """Interval evaluation of e against a letter (id resolves to its pid).

    resolver, when given, maps a PosVar to an interval; division by an
    interval containing zero yields top and records an alarm.
    """

    def ev(node) -> Interval:
        if isinstance(node, E.Const):
            return Interval.point(node.value)
        if isinstance(node, E.IntervalConst):
            return Interval(node.lo, node.hi)
        if isinstance(node, E.Var):
            if node.name == "id":
                return letter.pid
            if isinstance(letter.env, IntervalEnv):
                return letter.env.get(node.name)
            c = letter.env.constant(node.name)
            return Interval.point(c) if c is not None else Interval.top()
        if isinstance(node, E.PosVar):
            assert resolver is not None
            return resolver(node)
        if isinstance(node, E.Neg):
            return ev(node.arg).neg()
        if isinstance(node, E.BinOp):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return a.add(b)
            if node.op == "-":
                return a.sub(b)
            if node.op == "*":
                return a.mul(b)
            if node.op == "/":
                if b.contains(0) or b.is_bottom:
                    if sink is not None:
                        sink.division(E.to_source(node))
                    return Interval.top()
                return a.mul(b.inverse())
            if node.op == "%":
                if a.is_point and b.is_point and b.lo != 0:
                    av, bv = a.lo, b.lo
                    return Interval.point(av - bv * _trunc(av / bv))
                return Interval.top()
            if node.op == "min":
                if a.is_bottom or b.is_bottom:
                    return Interval.bottom()
                return Interval(min(a.lo, b.lo), min(a.hi, b.hi))
            if node.op == "max":
                if a.is_bottom or b.is_bottom:
                    return Interval.bottom()
                return Interval(max(a.lo, b.lo), max(a.hi, b.hi))
            if node.op == "^":
                if b.is_point and is_finite(b.lo) and b.lo.denominator == 1:
                    k = int(b.lo)
                    if a.is_point and is_finite(a.lo):
                        base = a.lo
                        if base == 0 and k < 0:
                            if sink is not None:
                                sink.division(E.to_source(node))
                            return Interval.top()
                        return Interval.point(base ** k)
                if a.is_point and is_finite(a.lo) and a.lo >= 1 and not b.is_bottom:
                    base = a.lo
                    lo = b.lo
                    hi = b.hi
                    def pw(exp):
                        if exp == NEG_INF:
                            return Fraction(0) if base > 1 else Fraction(1)
                        if exp == POS_INF:
                            return POS_INF if base > 1 else Fraction(1)
                        if exp.denominator == 1:
                            return base ** int(exp)
                        return None
                    plo, phi = pw(lo), pw(hi)
                    if plo is not None and phi is not None:
                        return Interval(plo, phi)
                return Interval.top()
        raise ValueError(f"cannot evaluate {node!r}")

    return ev(e)


def guaranteed_integral(ctx: DomainContext, e) -> bool:
    """Syntactic check that an expression always evaluates to an integer
    (division and rational variables may introduce fractions)."""
    if isinstance(e, E.Const):
        return e.value.denominator == 1
    if isinstance(e, (E.Var, E.PosVar)):
        return ctx.is_int(e.name)
    if isinstance(e, (E.NProcs, E.FreshId, E.IntervalConst)):
        return True
    if isinstance(e, E.Neg):
        return guaranteed_integral(ctx, e.arg)
    if isinstance(e, E.BinOp):
        if e.op in ("/", "^"):
            return False
        return guaranteed_integral(ctx, e.left) and guaranteed_integral(ctx, e.right)
    return False


def store_interval(ctx: DomainContext, var: str, val: Interval) -> Interval:
    """Value conversion on assignment: integer variables truncate toward
    zero, C style."""
    if ctx.is_int(var):
        return val.truncate()
    return val


def transfer_assign(ctx: DomainContext, s: AbstractLocalState, var: str, e,
                    sink=None) -> Optional[AbstractLocalState]:
    """Sound post-image of var := e on a single letter."""
    if isinstance(s.env, IntervalEnv):
        val = store_interval(ctx, var, eval_interval(ctx, s, e, sink))
        return s.with_env(s.env.set(var, val))
    aff = E.to_affine(e)
    exact_ok = not ctx.is_int(var) or guaranteed_integral(ctx, e)
    if aff is not None and exact_ok and all(isinstance(a, E.Var) for a in aff[0]):
        coeffs = {a.name: k for a, k in aff[0].items()}
        return s.with_env(s.env.assign_affine(var, coeffs, aff[1]))
    env = s.env.havoc(var)
    val = eval_interval(ctx, s, e, sink)
    if val.is_point:  # non-affine but constant-valued: keep the point
        point = store_interval(ctx, var, val).lo
        env2 = env.meet(AffineEnv.from_rows(env.vars, [({var: Fraction(1)}, point)]))
        if env2 is not None:
            env = env2
    return s.with_env(env)


def _refine_interval_cmp(ctx, s, op, lhs_name, rhs_itv) -> Optional[AbstractLocalState]:
    """Tighten variable lhs under lhs <op> rhs_itv (interval letters)."""
    cur = s.pid if lhs_name == "id" else s.env.get(lhs_name)
    integral = ctx.is_int(lhs_name)
    one = Fraction(1) if integral else Fraction(0)
    if op == "==":
        new = cur.meet(rhs_itv)
    elif op == "!=":
        new = cur
        if rhs_itv.is_point:
            if cur.is_point and cur.lo == rhs_itv.lo:
                new = Interval.bottom()
            elif integral and cur.lo == rhs_itv.lo and is_finite(cur.lo):
                new = Interval(cur.lo + 1, cur.hi)
            elif integral and cur.hi == rhs_itv.lo and is_finite(cur.hi):
                new = Interval(cur.lo, cur.hi - 1)
    elif op == "<":
        bound = rhs_itv.hi if not integral else bound_add(rhs_itv.hi, -one)
        new = cur.meet(Interval(NEG_INF, bound))
    elif op == "<=":
        new = cur.meet(Interval(NEG_INF, rhs_itv.hi))
    elif op == ">":
        bound = rhs_itv.lo if not integral else bound_add(rhs_itv.lo, one)
        new = cur.meet(Interval(bound, POS_INF))
    elif op == ">=":
        new = cur.meet(Interval(rhs_itv.lo, POS_INF))
    else:
        return s
    if integral:
        new = new.integral_tighten()
    if new.is_bottom:
        return None
    if lhs_name == "id":
        return s.with_pid(new)
    return s.with_env(s.env.set(lhs_name, new))


def _apply_comparison(ctx, s, cmp_expr, sink=None) -> Optional[AbstractLocalState]:
    """Restrict a letter to the states satisfying one comparison."""
    op = cmp_expr.op
    left, right = cmp_expr.left, cmp_expr.right
    flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}
    if not isinstance(left, E.Var) and isinstance(right, E.Var):
        left, right = right, left
        op = flipped[op]

    if isinstance(s.env, AffineEnv):
        aff_l = E.to_affine(left)
        aff_r = E.to_affine(right)
        if aff_l is not None and aff_r is not None and \
                all(isinstance(a, E.Var) for a in aff_l[0]) and \
                all(isinstance(a, E.Var) for a in aff_r[0]):
            coeffs = {a.name: k for a, k in aff_l[0].items()}
            for a, k in aff_r[0].items():
                coeffs[a.name] = coeffs.get(a.name, Fraction(0)) - k
            const = aff_r[1] - aff_l[1]
            coeffs = {n: k for n, k in coeffs.items() if k != 0}
            s2 = s
            if op == "==":
                env = s.env.meet(AffineEnv.from_rows(s.env.vars, [(coeffs, const)]))
                if env is None:
                    return None
                s2 = s.with_env(env)
            else:
                val = s.env.value_of(coeffs)
                if val is not None:
                    holds = {"!=": val != const, "<": val < const, "<=": val <= const,
                             ">": val > const, ">=": val >= const}[op]
                    if not holds:
                        return None
            if s2 is not None and isinstance(left, E.Var) and left.name == "id":
                rng = eval_interval(ctx, s2, right, sink)
                s2 = _refine_interval_cmp(ctx, s2, op, "id", rng)
            return s2
        return s  # non-affine comparison degrades to identity

    if isinstance(left, E.Var):
        rng = eval_interval(ctx, s, right, sink)
        return _refine_interval_cmp(ctx, s, op, left.name, rng)
    # no variable on either side: decide constants when possible
    li = eval_interval(ctx, s, left, sink)
    ri = eval_interval(ctx, s, right, sink)
    if li.is_point and ri.is_point:
        a, b = li.lo, ri.lo
        holds = {"<": a < b, "<=": a <= b, "==": a == b,
                 "!=": a != b, ">": a > b, ">=": a >= b}[op]
        return s if holds else None
    return s


def transfer_filter(ctx: DomainContext, s: AbstractLocalState, e, branch: str,
                    sink=None) -> Optional[AbstractLocalState]:
    """Restriction of s to e != 0 (then) or e == 0 (else), C truth."""
    if isinstance(e, E.Nondet):
        return s
    if E.is_comparison(e):
        cmp_expr = e if branch == "then" else E.negate_comparison(e)
        return _apply_comparison(ctx, s, cmp_expr, sink)
    # plain arithmetic condition: then = e != 0, else = e == 0
    cmp_expr = E.BinOp("!=" if branch == "then" else "==", e, E.Const(Fraction(0)))
    return _apply_comparison(ctx, s, cmp_expr, sink)


# ---------------------------------------------------------------------------
# guard meets


def _apply_constraint(ctx, s, con: Constraint, sink=None) -> Optional[AbstractLocalState]:
    return _apply_comparison(ctx, s, E.BinOp(con.op, E.Var(con.lhs), con.rhs), sink)


def meet_guard(ctx: DomainContext, s: AbstractLocalState, g: GuardElement,
               sink=None) -> Optional[AbstractLocalState]:
    """Greatest lower bound of a letter and a guard element (None = bottom).

    Constraint refinement is only as strong as the letter's own domain, so
    the result over-approximates the exact meet; that is the sound side for
    every use (matching and property intersection)."""
    atom = g.atom_for(s.loc)
    if atom is None:
        return None
    pid = s.pid.meet(atom.pid)
    if pid.is_bottom:
        return None
    out = s.with_pid(pid)
    if atom.env is not None:
        env = out.env.meet(atom.env)
        if env is None:
            return None
        out = out.with_env(env)
    for con in atom.constraints:
        out = _apply_constraint(ctx, out, con, sink)
        if out is None:
            return None
    return out


def leq_guard(ctx: DomainContext, s: AbstractLocalState, g: GuardElement) -> bool:
    """True iff every concretisation of the letter matches the guard."""
    atom = g.atom_for(s.loc)
    if atom is None:
        return False
    if not s.pid.leq(atom.pid):
        return False
    if atom.env is not None and not s.env.leq(atom.env):
        return False
    for con in atom.constraints:
        refined = _apply_constraint(ctx, s, con)
        if refined is None or refined != s:
            return False
    return True


# ---------------------------------------------------------------------------
# relational rewrites over matched letter tuples


def _letters_linsys(letters) -> _LinSys:
    sys = _LinSys()
    for i, letter in enumerate(letters):
        sys.add_env(str(i), letter.env)
        if letter.pid.is_point:
            sys.add_row({f"{i}.id": Fraction(1)}, letter.pid.lo)
    return sys


def _posvar_resolver(ctx, letters, sink):
    def resolve(pv: E.PosVar) -> Interval:
        letter = letters[pv.pos]
        if pv.name == "id":
            return letter.pid
        return eval_interval(ctx, letter, E.Var(pv.name), sink)
    return resolve


def _add_cond_rows(sys: _LinSys, conds: tuple) -> None:
    """Encode id conditions (pos, rhs) as rows of a tagged combined system;
    non-affine right-hand sides are skipped (handled on the interval side)."""
    for pos, rhs in conds:
        aff = E.to_affine(rhs)
        if aff is None:
            continue
        coeffs = {}
        ok = True
        for atom, k in aff[0].items():
            if isinstance(atom, E.PosVar):
                name = f"{atom.pos}.{atom.name}"
                coeffs[name] = coeffs.get(name, Fraction(0)) + k
            else:
                ok = False
        if not ok:
            continue
        coeffs[f"{pos}.id"] = coeffs.get(f"{pos}.id", Fraction(0)) - 1
        sys.add_row(coeffs, -aff[1])


def joint_refine(ctx: DomainContext, letters: tuple, conds: tuple, sink=None):
    """Refine a tuple of matched letters under identifier conditions.

    Each condition requires letters[pos].id == rhs where rhs is an
    expression over PosVar atoms.  Returns the refined tuple or None when
    the conjunction is unsatisfiable.  Under the affine domain the
    refinement is relational across letters.
    """
    letters = list(letters)
    resolver = _posvar_resolver(ctx, letters, sink)
    for pos, rhs in conds:
        rng = eval_interval(ctx, letters[pos], rhs, sink, resolver=resolver).integral_tighten()
        pid = letters[pos].pid.meet(rng)
        if pid.is_bottom:
            return None
        letters[pos] = letters[pos].with_pid(pid)
    if ctx.kind == "affine" and conds:
        sys = _letters_linsys(letters)
        _add_cond_rows(sys, conds)
        if not sys.reduce():
            return None
        for i, letter in enumerate(letters):
            sub = _LinSys()
            sub.rows = [(dict(r), c) for r, c in sys.rows]
            env = sub.project_to_tag(str(i), letter.env.vars)
            if env is None:
                return None
            letters[i] = letter.with_env(env)
            val = env.constant("id")
            if val is not None:
                pid = letter.pid.meet(Interval.point(val))
                if pid.is_bottom:
                    return None
                letters[i] = letters[i].with_pid(pid)
    return tuple(letters)


def relational_updates(ctx: DomainContext, target: AbstractLocalState, target_pos: int,
                       updates: tuple, letters: tuple, sink=None, conds: tuple = ()):
    """Apply env updates var := expr (PosVar atoms allowed) to target.

    Under the affine domain the updates go through a combined system over
    all matched letters, together with any identifier conditions, so
    cross-letter relations survive projection."""
    if not updates:
        return target
    letters = tuple(target if i == target_pos else l for i, l in enumerate(letters))
    if ctx.kind == "interval":
        resolver = _posvar_resolver(ctx, letters, sink)
        env = target.env
        for var, rhs in updates:
            rhs_self = E.map_vars(rhs, lambda n: E.PosVar(target_pos, n))
            val = store_interval(ctx, var,
                                 eval_interval(ctx, target, rhs_self, sink, resolver=resolver))
            env = env.set(var, val)
            if env is None:
                return None
        return target.with_env(env)

    sys = _letters_linsys(letters)
    _add_cond_rows(sys, conds)
    tag = str(target_pos)
    for k, (var, rhs) in enumerate(updates):
        tmp = f"\x00tmp{k}"
        aff = E.to_affine(rhs)
        affine_ok = aff is not None and (not ctx.is_int(var) or guaranteed_integral(ctx, rhs))
        coeffs = {}
        if affine_ok:
            for atom, kk in aff[0].items():
                if isinstance(atom, E.PosVar):
                    coeffs[f"{atom.pos}.{atom.name}"] = kk
                elif isinstance(atom, E.Var):
                    coeffs[f"{tag}.{atom.name}"] = kk
                else:
                    affine_ok = False
        if affine_ok:
            row = dict(coeffs)
            row[tmp] = Fraction(-1)
            sys.add_row(row, -aff[1])
        sys.project_out(f"{tag}.{var}")
        if affine_ok:
            sys.rename(tmp, f"{tag}.{var}")
        else:
            resolver = _posvar_resolver(ctx, letters, sink)
            rhs_self = E.map_vars(rhs, lambda n: E.PosVar(target_pos, n))
            val = eval_interval(ctx, target, rhs_self, sink, resolver=resolver)
            if val.is_point:
                sys.add_row({f"{tag}.{var}": Fraction(1)},
                            store_interval(ctx, var, val).lo)
    env = sys.project_to_tag(tag, target.env.vars)
    if env is None:
        return None
    return target.with_env(env)


# ---------------------------------------------------------------------------
# bounded concretisation (oracle support)


def concretize_bounded(ctx: DomainContext, s: Optional[AbstractLocalState], universe):
    """gamma(s) restricted to ids and values drawn from a finite universe."""
    if s is None:
        return set()
    values = sorted(Fraction(v) for v in universe)
    ids = [v for v in values if s.pid.contains(v)]
    out = set()
    for pid in ids:
        for combo in itertools.product(values, repeat=len(ctx.variables)):
            rho = dict(zip(ctx.variables, combo))
            if isinstance(s.env, IntervalEnv):
                if all(s.env.get(v).contains(q) for v, q in rho.items()):
                    out.add((pid, s.loc, tuple(sorted(rho.items()))))
            else:
                assignment = dict(rho)
                assignment["id"] = pid
                if s.env.satisfies(assignment):
                    out.add((pid, s.loc, tuple(sorted(rho.items()))))
    return out


def letter_accepts(ctx: DomainContext, s: AbstractLocalState, cid, loc, rho: dict) -> bool:
    """Membership of one concrete local state in gamma(letter)."""
    if loc != s.loc or not s.pid.contains(Fraction(cid)):
        return False
    if isinstance(s.env, IntervalEnv):
        return all(s.env.get(v).contains(Fraction(q)) for v, q in rho.items())
    assignment = {v: Fraction(q) for v, q in rho.items()}
    assignment["id"] = Fraction(cid)
    for v in s.env.vars:
        assignment.setdefault(v, Fraction(0))
    return s.env.satisfies(assignment)
