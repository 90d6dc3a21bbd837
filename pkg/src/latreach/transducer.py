"""Lattice transducers and their application to lattice automata.

A transducer transition carries a guard tuple (one guard element per read
letter) and a sequence of rewriters producing the output letters.  The
rewriters are declarative data (LetterOut), not opaque code, so generated
transducers serialize to JSON and run unchanged under either environment
domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import expr as E
from .automaton import Builder, LatticeAutomaton, normalize, path_labels
from .domain import (
    AbstractLocalState,
    AlarmSink,
    DomainContext,
    GuardElement,
    Interval,
    POS_INF,
    joint_refine,
    relational_updates,
    transfer_assign,
    transfer_filter,
)


# ---------------------------------------------------------------------------
# rewriter specifications


@dataclass(frozen=True)
class LetterOut:
    """Recipe for one output letter of a rewriter.

    base: index into the matched tuple, or None for a fresh process letter.
    loc: target location (None keeps the base letter's).
    instr: optional local instruction (Assign/Filter) applied to the base.
    updates: env assignments var := expr; the expression may mention the
        base's own variables (Var) or matched partners (PosVar).
    conds: identifier conditions (pos, expr): matched letter pos must have
        id equal to the expression; unsatisfiable conditions kill the whole
        rewrite, which encodes partner matching.
    pid: ("keep",) | ("const", Fraction) | ("fresh",).
    """

    base: Optional[int]
    loc: Optional[str] = None
    instr: object = None
    updates: tuple = ()
    conds: tuple = ()
    pid: tuple = ("keep",)
    reset_zero: bool = False


@dataclass(frozen=True)
class InstanceInfo:
    """Word-structure facts for one rule instance, used by create steps.

    suffix_len is the static number of letters after the creating letter
    when that count is path-independent, else None; min_len is a lower
    bound on the matched word length.  Fresh identifiers exploit that
    words are ordered by identifier, so a creator at a statically known
    distance s from the end creates id + 1 + s."""

    suffix_len: Optional[int] = 0
    min_len: int = 1


def _fresh_pid(base: Optional[AbstractLocalState], inst: InstanceInfo) -> Interval:
    if inst.suffix_len is not None and base is not None:
        return base.pid.shift(1 + inst.suffix_len)
    return Interval(Fraction(inst.min_len), POS_INF)


def eval_letter_out(ctx: DomainContext, out: LetterOut, matched: tuple,
                    inst: InstanceInfo = InstanceInfo(), sink: AlarmSink = None
                    ) -> Optional[AbstractLocalState]:
    """Evaluate one output recipe on a matched letter tuple (None = bottom)."""
    if out.conds:
        matched = joint_refine(ctx, matched, out.conds, sink)
        if matched is None:
            return None

    if out.base is None:
        if out.pid[0] == "const":
            pid = Interval.point(out.pid[1])
        else:
            creator = matched[0] if matched else None
            pid = _fresh_pid(creator, inst)
        if pid.is_bottom:
            return None
        assert out.loc is not None
        if out.reset_zero:
            letter = ctx.zero_letter(pid, out.loc)
        else:
            letter = AbstractLocalState(pid, out.loc, ctx.top_env())
        if out.updates:
            resolved = tuple((var, _resolve_fresh(rhs, inst)) for var, rhs in out.updates)
            letter = relational_updates(ctx, letter, len(matched), resolved,
                                        matched + (letter,), sink)
        return letter

    letter = matched[out.base]

    if out.instr is not None:
        from .frontend import Assign, Filter  # instruction payloads

        if isinstance(out.instr, Assign):
            letter = transfer_assign(ctx, letter, out.instr.var, out.instr.expr, sink)
        elif isinstance(out.instr, Filter):
            letter = transfer_filter(ctx, letter, out.instr.cond, out.instr.branch, sink)
        else:
            raise ValueError(f"unknown instruction {out.instr!r}")
        if letter is None:
            return None

    if out.updates:
        resolved = tuple((var, _resolve_fresh(rhs, inst)) for var, rhs in out.updates)
        letter = relational_updates(ctx, letter, out.base, resolved, matched, sink,
                                    conds=out.conds)
        if letter is None:
            return None

    if out.pid[0] == "const":
        letter = letter.with_pid(Interval.point(out.pid[1]))
        if letter is None:
            return None
    elif out.pid[0] == "fresh":
        letter = letter.with_pid(_fresh_pid(matched[out.base], inst))
        if letter is None:
            return None

    if out.loc is not None:
        letter = letter.relocate(out.loc)
    return letter


def _resolve_fresh(rhs, inst: InstanceInfo):
    """Rewrite FreshId into the identifier handed out for this instance."""
    if isinstance(rhs, E.FreshId):
        if inst.suffix_len is not None:
            return E.BinOp("+", E.Var("id"), E.Const(Fraction(1 + inst.suffix_len)))
        return E.IntervalConst(Fraction(inst.min_len), POS_INF)
    if isinstance(rhs, E.Neg):
        return E.Neg(_resolve_fresh(rhs.arg, inst))
    if isinstance(rhs, E.BinOp):
        return E.BinOp(rhs.op, _resolve_fresh(rhs.left, inst), _resolve_fresh(rhs.right, inst))
    return rhs


# ---------------------------------------------------------------------------
# transducers


@dataclass(frozen=True)
class TransducerRule:
    name: str
    guard: tuple  # tuple of GuardElement, length n >= 1
    outputs: tuple  # tuple of LetterOut, length m >= 0

    def __post_init__(self):
        assert len(self.guard) >= 1


@dataclass(frozen=True)
class LatticeTransducer:
    states: frozenset
    initial: frozenset
    final: frozenset
    rules: frozenset  # of (src, TransducerRule, dst)

    @staticmethod
    def single_state(rules) -> "LatticeTransducer":
        q = "t"
        return LatticeTransducer(
            frozenset({q}), frozenset({q}), frozenset({q}),
            frozenset((q, r, q) for r in rules),
        )

    def sorted_rules(self):
        return sorted(self.rules, key=lambda r: (repr(r[0]), r[1].name, repr(r[2])))


def path_enumerate(a: LatticeAutomaton, q, n: int):
    """All length-n label paths of the automaton starting at q."""
    assert n >= 1
    return set(path_labels(a, q, n))


def apply_transducer(ctx: DomainContext, t: LatticeTransducer, a: LatticeAutomaton,
                     sink: AlarmSink = None) -> LatticeAutomaton:
    """Image of the automaton under the transducer (sound: contains the
    image of every accepted word).

    Product over (transducer state, automaton state); for every rule with a
    guard of length n and every automaton path of length n whose pointwise
    meet with the guard is non-bottom, the output letters form a fresh path
    between the product endpoints.  Rule instances with a bottom output
    letter contribute nothing."""
    a = normalize(a)
    if a.is_trivially_empty:
        return LatticeAutomaton.empty()
    bld = Builder()
    bld.initial = {(p, q) for p in t.initial for q in a.initial}
    bld.final = {(p, q) for p in t.final for q in a.final}
    for (p, rule, p2) in t.sorted_rules():
        n = len(rule.guard)
        for q in sorted(a.states, key=repr):
            for labels, q2 in sorted(path_labels(a, q, n), key=repr):
                matched = []
                ok = True
                for letter, g in zip(labels, rule.guard):
                    from .domain import meet_guard

                    m = meet_guard(ctx, letter, g, sink)
                    if m is None:
                        ok = False
                        break
                    matched.append(m)
                if not ok:
                    continue
                matched = tuple(matched)
                outs = []
                dead = False
                for spec in rule.outputs:
                    img = eval_letter_out(ctx, spec, matched, InstanceInfo(), sink)
                    if img is None:
                        dead = True
                        break
                    outs.append(img)
                if dead:
                    continue
                bld.add_path((p, q), outs, (p2, q2), tag=rule.name)
    return normalize(bld.build())


# ---------------------------------------------------------------------------
# JSON (de)serialization


def guard_atom_to_json(atom):
    from .automaton import interval_to_json, env_to_json

    return {
        "id": interval_to_json(atom.pid),
        "env": None if atom.env is None else env_to_json(atom.env),
        "constraints": [[c.lhs, c.op, E.to_source(c.rhs)] for c in atom.constraints],
    }


def guard_to_json(g: GuardElement):
    return {
        "by_loc": None if g.by_loc is None else [[loc, guard_atom_to_json(atom)] for loc, atom in g.by_loc],
        "default": None if g.default is None else guard_atom_to_json(g.default),
    }


def letter_out_to_json(out: LetterOut):
    from .frontend import Assign, Filter

    instr = None
    if isinstance(out.instr, Assign):
        instr = {"assign": [out.instr.var, E.to_source(out.instr.expr)]}
    elif isinstance(out.instr, Filter):
        cond = "*" if isinstance(out.instr.cond, E.Nondet) else E.to_source(out.instr.cond)
        instr = {"filter": [cond, out.instr.branch]}
    pid = list(out.pid)
    if pid[0] == "const":
        pid[1] = f"{pid[1].numerator}/{pid[1].denominator}"
    return {
        "base": out.base,
        "loc": out.loc,
        "instr": instr,
        "updates": [[v, E.to_source(rhs)] for v, rhs in out.updates],
        "conds": [[pos, E.to_source(rhs)] for pos, rhs in out.conds],
        "pid": pid,
        "reset_zero": out.reset_zero,
    }


def transducer_to_json(t: LatticeTransducer):
    return {
        "states": sorted(t.states, key=repr),
        "initial": sorted(t.initial, key=repr),
        "final": sorted(t.final, key=repr),
        "rules": [
            {
                "src": src, "dst": dst, "name": rule.name,
                "guard": [guard_to_json(g) for g in rule.guard],
                "outputs": [letter_out_to_json(o) for o in rule.outputs],
            }
            for (src, rule, dst) in t.sorted_rules()
        ],
    }


def guard_atom_from_json(d):
    from .automaton import interval_from_json, env_from_json
    from .domain import Constraint, GuardAtom
    from .frontend import parse_expr

    return GuardAtom(
        interval_from_json(d["id"]),
        None if d["env"] is None else env_from_json(d["env"]),
        tuple(Constraint(lhs, op, parse_expr(rhs)) for lhs, op, rhs in d["constraints"]),
    )


def guard_from_json(d) -> GuardElement:
    return GuardElement(
        None if d["by_loc"] is None else tuple((loc, guard_atom_from_json(a)) for loc, a in d["by_loc"]),
        None if d["default"] is None else guard_atom_from_json(d["default"]),
    )


def letter_out_from_json(d) -> LetterOut:
    from .frontend import Assign, Filter, parse_expr

    instr = None
    if d["instr"] is not None:
        if "assign" in d["instr"]:
            var, src = d["instr"]["assign"]
            instr = Assign(var, parse_expr(src))
        else:
            src, branch = d["instr"]["filter"]
            cond = E.Nondet() if src == "*" else parse_expr(src)
            instr = Filter(cond, branch)
    pid = d["pid"]
    if pid[0] == "const":
        num, _, den = pid[1].partition("/")
        pid = ("const", Fraction(int(num), int(den)))
    else:
        pid = tuple(pid)
    return LetterOut(
        base=d["base"],
        loc=d["loc"],
        instr=instr,
        updates=tuple((v, parse_expr(src)) for v, src in d["updates"]),
        conds=tuple((pos, parse_expr(src)) for pos, src in d["conds"]),
        pid=pid,
        reset_zero=d["reset_zero"],
    )


def transducer_from_json(d) -> LatticeTransducer:
    rules = set()
    for r in d["rules"]:
        rule = TransducerRule(
            r["name"],
            tuple(guard_from_json(g) for g in r["guard"]),
            tuple(letter_out_from_json(o) for o in r["outputs"]),
        )
        rules.add((r["src"], rule, r["dst"]))
    return LatticeTransducer(
        frozenset(d["states"]), frozenset(d["initial"]), frozenset(d["final"]),
        frozenset(rules),
    )


def transducer_to_dot(t: LatticeTransducer, name="transducer") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for q in sorted(t.states, key=repr):
        shape = "doublecircle" if q in t.final else "circle"
        lines.append(f'  "{q}" [shape={shape}];')
    for (src, rule, dst) in t.sorted_rules():
        guard = " . ".join(str(g) for g in rule.guard)
        lines.append(f'  "{src}" -> "{dst}" [label="{rule.name}: {guard}"];')
    lines.append("}")
    return "\n".join(lines)
