"""Lattice automata over the letter domain.

Transitions carry non-bottom letters; every label lives in a single
partition class (its location).  normalize() produces the canonical form
used everywhere: deterministic over partition keys, minimized over keys,
one transition per (state, key, target), states renamed by BFS discovery
order.  Canonical forms make structural equality meaningful, which the
widening relies on.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .domain import (
    AbstractLocalState,
    AffineEnv,
    DomainContext,
    Interval,
    IntervalEnv,
    NEG_INF,
    POS_INF,
    letter_accepts,
    letter_join,
    letter_leq,
    letter_meet,
    letter_widen,
    loc_sort_key,
    meet_guard,
)


@dataclass(frozen=True)
class LatticeAutomaton:
    states: frozenset
    initial: frozenset
    final: frozenset
    transitions: frozenset  # of (src, AbstractLocalState, dst)

    @staticmethod
    def empty() -> "LatticeAutomaton":
        return LatticeAutomaton(frozenset(), frozenset(), frozenset(), frozenset())

    @staticmethod
    def from_word(letters) -> "LatticeAutomaton":
        """Chain automaton accepting exactly the given label word."""
        trans = frozenset((i, letter, i + 1) for i, letter in enumerate(letters))
        n = len(letters)
        return LatticeAutomaton(frozenset(range(n + 1)), frozenset({0}), frozenset({n}), trans)

    @property
    def is_trivially_empty(self) -> bool:
        return not self.initial

    def out_edges(self, q):
        return [(s, l, t) for (s, l, t) in self.transitions if s == q]

    def sorted_transitions(self):
        return sorted(self.transitions, key=lambda t: (t[0], t[1].sort_key(), t[2]))

    def size(self):
        return (len(self.states), len(self.transitions))

    def __str__(self) -> str:
        lines = [f"states={sorted(self.states)} init={sorted(self.initial)} final={sorted(self.final)}"]
        for s, l, t in self.sorted_transitions():
            lines.append(f"  {s} --{l}--> {t}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# construction helper (epsilon edges allowed, eliminated on build)


class Builder:
    """Accumulates transitions, label paths and epsilon links, then builds a
    trimmed automaton."""

    def __init__(self):
        self.trans = set()
        self.eps = set()
        self.initial = set()
        self.final = set()
        self._fresh = 0

    def fresh(self, tag="f"):
        self._fresh += 1
        return ("#", tag, self._fresh)

    def add(self, src, letter, dst):
        assert letter is not None
        self.trans.add((src, letter, dst))

    def add_eps(self, src, dst):
        if src != dst:
            self.eps.add((src, dst))

    def add_path(self, src, letters, dst, tag="p"):
        """A path labelled by the letter sequence (epsilon when empty)."""
        if not letters:
            self.add_eps(src, dst)
            return
        cur = src
        for letter in letters[:-1]:
            nxt = self.fresh(tag)
            self.add(cur, letter, nxt)
            cur = nxt
        self.add(cur, letters[-1], dst)

    def include(self, auto: LatticeAutomaton, rename=lambda q: q):
        for (s, l, t) in auto.transitions:
            self.add(rename(s), l, rename(t))

    def build(self) -> LatticeAutomaton:
        states = set(self.initial) | set(self.final)
        for (s, _, t) in self.trans:
            states.add(s)
            states.add(t)
        if not self.eps:
            auto = LatticeAutomaton(frozenset(states), frozenset(self.initial),
                                    frozenset(self.final), frozenset(self.trans))
            return trim(auto)
        succ = {}
        for a, b in self.eps:
            succ.setdefault(a, set()).add(b)
            states.add(a)
            states.add(b)

        def closure(q):
            seen = {q}
            stack = [q]
            while stack:
                for nxt in succ.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            return seen

        out_by_src = {}
        for (s, l, t) in self.trans:
            out_by_src.setdefault(s, []).append((l, t))
        trans = set(self.trans)
        final = set(self.final)
        # only epsilon sources gain lifted transitions / finality
        for s0 in succ:
            reach = closure(s0)
            for s in reach:
                if s != s0:
                    for (l, t) in out_by_src.get(s, ()):
                        trans.add((s0, l, t))
            if reach & final:
                final.add(s0)
        auto = LatticeAutomaton(frozenset(states), frozenset(self.initial),
                                frozenset(final), frozenset(trans))
        return trim(auto)


def trim(a: LatticeAutomaton) -> LatticeAutomaton:
    """Drop states that are unreachable or cannot reach a final state."""
    fwd = {}
    bwd = {}
    for (s, _, t) in a.transitions:
        fwd.setdefault(s, set()).add(t)
        bwd.setdefault(t, set()).add(s)

    def reach(seeds, edges):
        seen = set(seeds)
        stack = list(seeds)
        while stack:
            for nxt in edges.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    live = reach(a.initial & a.states, fwd) & reach(a.final & a.states, bwd)
    if not live:
        return LatticeAutomaton.empty()
    return LatticeAutomaton(
        frozenset(live),
        frozenset(a.initial & live),
        frozenset(a.final & live),
        frozenset((s, l, t) for (s, l, t) in a.transitions if s in live and t in live),
    )


# ---------------------------------------------------------------------------
# normalization


def normalize(a: LatticeAutomaton) -> LatticeAutomaton:
    """Canonical form: key-deterministic, key-minimized, labels merged by
    join within each (state, key, state') class, states renamed by BFS.

    Determinization and minimization work over partition keys (locations),
    joining labels when states merge; the atom language is preserved or
    enlarged, and normalize is idempotent.
    """
    a = trim(a)
    if not a.states:
        return LatticeAutomaton.empty()

    # subset construction over keys
    start = frozenset(a.initial)
    by_src = {}
    for (s, l, t) in a.transitions:
        by_src.setdefault(s, []).append((l, t))
    det_states = {start}
    det_trans = {}  # (S, key) -> (label, T)
    queue = [start]
    while queue:
        cur = queue.pop()
        grouped = {}
        for q in cur:
            for (l, t) in by_src.get(q, ()):
                key = l.loc
                if key in grouped:
                    lbl, tgt = grouped[key]
                    grouped[key] = (letter_join(lbl, l), tgt | {t})
                else:
                    grouped[key] = (l, {t})
        for key, (lbl, tgt) in grouped.items():
            tgt = frozenset(tgt)
            det_trans[(cur, key)] = (lbl, tgt)
            if tgt not in det_states:
                det_states.add(tgt)
                queue.append(tgt)
    det_final = {S for S in det_states if S & a.final}

    # Moore minimization over keys
    out_by_state = {}
    for (S, key), (_, T) in det_trans.items():
        out_by_state.setdefault(S, []).append((key, T))
    block = {S: int(S in det_final) for S in det_states}
    while True:
        sig = {
            S: (block[S], tuple(sorted((key, block[T]) for key, T in out_by_state.get(S, ()))))
            for S in det_states
        }
        classes = {}
        for S, signature in sig.items():
            classes.setdefault(signature, []).append(S)
        new_block = {}
        for i, (_, members) in enumerate(sorted(classes.items(), key=lambda kv: repr(kv[0]))):
            for S in members:
                new_block[S] = i
        if len(set(new_block.values())) == len(set(block.values())):
            block = new_block
            break
        block = new_block

    # merge classes; join labels of merged transitions
    class_of = block
    merged_trans = {}
    for (S, key), (lbl, T) in det_trans.items():
        edge = (class_of[S], key, class_of[T])
        if edge in merged_trans:
            merged_trans[edge] = letter_join(merged_trans[edge], lbl)
        else:
            merged_trans[edge] = lbl
    init_class = class_of[start]
    final_classes = {class_of[S] for S in det_final}

    # canonical renaming by BFS over sorted keys
    order = {init_class: 0}
    queue = [init_class]
    adj = {}
    for (c1, key, c2), lbl in merged_trans.items():
        adj.setdefault(c1, []).append((key, c2))
    while queue:
        cur = queue.pop(0)
        for key, nxt in sorted(adj.get(cur, ()), key=lambda kv: loc_sort_key(kv[0])):
            if nxt not in order:
                order[nxt] = len(order)
                queue.append(nxt)
    # any class not BFS-reachable was trimmed away already
    states = frozenset(order.values())
    transitions = frozenset(
        (order[c1], lbl, order[c2]) for (c1, key, c2), lbl in merged_trans.items()
    )
    return LatticeAutomaton(
        states,
        frozenset({order[init_class]}),
        frozenset(order[c] for c in final_classes),
        transitions,
    )


# ---------------------------------------------------------------------------
# boolean operations


def _raw_union(a: LatticeAutomaton, b: LatticeAutomaton) -> LatticeAutomaton:
    bld = Builder()
    bld.initial = {("a", q) for q in a.initial} | {("b", q) for q in b.initial}
    bld.final = {("a", q) for q in a.final} | {("b", q) for q in b.final}
    bld.include(a, lambda q: ("a", q))
    bld.include(b, lambda q: ("b", q))
    return bld.build()


def union_all(autos) -> LatticeAutomaton:
    """Union of many automata.

    Each argument is canonicalized first and duplicates are dropped; the
    union then folds pairwise so the determinization always runs on small
    canonical inputs instead of one huge juxtaposition."""
    canon = []
    seen = set()
    for a in autos:
        a = normalize(a)
        if a.is_trivially_empty or a in seen:
            continue
        seen.add(a)
        canon.append(a)
    if not canon:
        return LatticeAutomaton.empty()
    canon.sort(key=lambda a: (len(a.states), len(a.transitions)))
    out = canon[0]
    for nxt in canon[1:]:
        if includes(out, nxt):
            continue
        out = normalize(_raw_union(out, nxt))
    return out


def union(a: LatticeAutomaton, b: LatticeAutomaton) -> LatticeAutomaton:
    return union_all([a, b])


def intersection(a: LatticeAutomaton, b: LatticeAutomaton) -> LatticeAutomaton:
    """Product construction with label meets, bottom products dropped."""
    bld = Builder()
    bld.initial = {(qa, qb) for qa in a.initial for qb in b.initial}
    bld.final = {(qa, qb) for qa in a.final for qb in b.final}
    for (sa, la, ta) in a.transitions:
        for (sb, lb, tb) in b.transitions:
            m = letter_meet(la, lb)
            if m is not None:
                bld.add((sa, sb), m, (ta, tb))
    return normalize(bld.build())


def is_empty(a: LatticeAutomaton) -> bool:
    return trim(a).is_trivially_empty


def includes(big: LatticeAutomaton, small: LatticeAutomaton) -> bool:
    """Decide L(small) subseteq L(big); may answer False on an inclusion
    that holds (sound direction only).  Simulation over the canonical
    key-deterministic forms with labelwise leq."""
    big = normalize(big)
    small = normalize(small)
    if small.is_trivially_empty:
        return True
    if big.is_trivially_empty:
        return False
    big_out = {}
    for (s, l, t) in big.transitions:
        big_out[(s, l.loc)] = (l, t)
    pairs = {(next(iter(small.initial)), next(iter(big.initial)))}
    seen = set()
    while pairs:
        qs, qb = pairs.pop()
        if (qs, qb) in seen:
            continue
        seen.add((qs, qb))
        if qs in small.final and qb not in big.final:
            return False
        for (s, l, t) in small.transitions:
            if s != qs:
                continue
            hit = big_out.get((qb, l.loc))
            if hit is None:
                return False
            lbl, tb = hit
            if not letter_leq(l, lbl):
                return False
            pairs.add((t, tb))
    return True


# ---------------------------------------------------------------------------
# matching utilities


@dataclass(frozen=True)
class MatchTriple:
    begin: object
    labels: tuple  # matched letters, all non-bottom
    end: object


def path_labels(a: LatticeAutomaton, q, n: int):
    """All (label sequence, end state) for paths of length n from q."""
    acc = [((), q)]
    for _ in range(n):
        nxt = []
        for labels, cur in acc:
            for (s, l, t) in a.transitions:
                if s == cur:
                    nxt.append((labels + (l,), t))
        acc = nxt
    return acc


def matches(ctx: DomainContext, w, a: LatticeAutomaton):
    """Matching sequences of a guard word against the automaton: every
    (q_b, v, q_e) with a path of length |w| whose pointwise meet with the
    guard word is non-bottom."""
    assert len(w) >= 1
    out = []
    for q in sorted(a.states, key=repr):
        for labels, end in path_labels(a, q, len(w)):
            vs = []
            ok = True
            for l, g in zip(labels, w):
                m = meet_guard(ctx, l, g)
                if m is None:
                    ok = False
                    break
                vs.append(m)
            if ok:
                out.append(MatchTriple(q, tuple(vs), end))
    return out


def sub_automaton(a: LatticeAutomaton, qb, qe) -> LatticeAutomaton:
    assert qb in a.states and qe in a.states
    return LatticeAutomaton(a.states, frozenset({qb}), frozenset({qe}), a.transitions)


def map_labels(fn: Callable, a: LatticeAutomaton) -> LatticeAutomaton:
    """Apply fn to every label, dropping transitions whose image is bottom."""
    trans = set()
    for (s, l, t) in a.transitions:
        img = fn(l)
        if img is not None:
            trans.add((s, img, t))
    return LatticeAutomaton(a.states, a.initial, a.final, frozenset(trans))


# ---------------------------------------------------------------------------
# shape and widening


@dataclass(frozen=True)
class Shape:
    """Finite automaton over partition keys obtained by erasing labels."""

    states: frozenset
    initial: frozenset
    final: frozenset
    transitions: frozenset  # (src, key, dst)


def shape(a: LatticeAutomaton) -> Shape:
    return Shape(
        a.states, a.initial, a.final,
        frozenset((s, l.loc, t) for (s, l, t) in a.transitions),
    )


def _length_bound(a: LatticeAutomaton):
    """Longest accepted word length, or None when unbounded (contains a
    useful cycle).  The automaton must be trimmed."""
    a = trim(a)
    if not a.states:
        return 0
    adj = {}
    for (s, _, t) in a.transitions:
        adj.setdefault(s, set()).add(t)
    color = {}
    order = []

    def dfs(u):
        color[u] = 1
        for v in adj.get(u, ()):
            if color.get(v, 0) == 1:
                return False
            if color.get(v, 0) == 0 and not dfs(v):
                return False
        color[u] = 2
        order.append(u)
        return True

    for q in sorted(a.states, key=repr):
        if color.get(q, 0) == 0 and not dfs(q):
            return None
    dist = {q: (0 if q in a.initial else None) for q in a.states}
    for u in reversed(order):
        if dist.get(u) is None:
            continue
        for (s, _, t) in a.transitions:
            if s == u and (dist.get(t) is None or dist[t] < dist[u] + 1):
                dist[t] = dist[u] + 1
    best = [dist[q] for q in a.final if dist.get(q) is not None]
    return max(best) if best else 0


def _signature_quotient(a: LatticeAutomaton, k: int) -> LatticeAutomaton:
    """Merge states with the same bounded incoming-key history, initiality
    and finality; the quotient's language contains the original's."""
    a = trim(a)
    if not a.states:
        return a
    preds = {q: set() for q in a.states}
    for (s, l, t) in a.transitions:
        preds[t].add((s, l.loc))

    def history(q, depth):
        if depth == 0:
            return frozenset({()})
        out = set()
        if q in a.initial:
            out.add(())
        for (p, key) in preds[q]:
            for h in history(p, depth - 1):
                out.add((h + (key,))[-depth:])
        return frozenset(out)

    sig = {
        q: (q in a.initial, q in a.final, history(q, k))
        for q in a.states
    }
    classes = {}
    for q in sorted(a.states, key=repr):
        classes.setdefault(sig[q], []).append(q)
    rep = {}
    for members in classes.values():
        for q in members:
            rep[q] = members[0]
    return LatticeAutomaton(
        frozenset(rep[q] for q in a.states),
        frozenset(rep[q] for q in a.initial),
        frozenset(rep[q] for q in a.final),
        frozenset((rep[s], l, rep[t]) for (s, l, t) in a.transitions),
    )


def _widen_matched_labels(a: LatticeAutomaton, b: LatticeAutomaton, widen_locs):
    """Labelwise widening of two automata with identical canonical shape."""
    a_labels = {(s, l.loc, t): l for (s, l, t) in a.transitions}
    trans = set()
    for (s, l, t) in b.transitions:
        prev = a_labels.get((s, l.loc, t))
        if prev is None:
            trans.add((s, l, t))
        elif widen_locs is None or l.loc in widen_locs:
            trans.add((s, letter_widen(prev, letter_join(prev, l)), t))
        else:
            trans.add((s, letter_join(prev, l), t))
    return normalize(LatticeAutomaton(b.states, b.initial, b.final, frozenset(trans)))


def widen_automata(a: LatticeAutomaton, b: LatticeAutomaton,
                   widen_locs=None, k: int = 1) -> LatticeAutomaton:
    """Widening of lattice automata; intended use has L(a) <= L(b).

    If the canonical shapes agree, labels of matched transitions are widened
    (restricted to the widening locations).  Otherwise, while the iterates
    keep growing longer words, b is quotiented by its k-bounded incoming-key
    history before retrying the label widening.  The result's language
    contains L(a) and L(b).
    """
    a = normalize(a)
    b = normalize(union(a, b))
    if shape(a) == shape(b):
        return _widen_matched_labels(a, b, widen_locs)
    la = _length_bound(a)
    lb = _length_bound(b)
    growing = lb is None or (la is not None and lb > la)
    if not growing:
        return b  # bounded word lengths: shapes stabilize by themselves
    q = normalize(_signature_quotient(b, k))
    if shape(a) == shape(q):
        return _widen_matched_labels(a, q, widen_locs)
    qa = normalize(_signature_quotient(union(a, q), k))
    if shape(qa) == shape(q):
        return _widen_matched_labels(qa, q, widen_locs)
    return q


# ---------------------------------------------------------------------------
# concretisation utilities


def accepts_concrete(ctx: DomainContext, a: LatticeAutomaton, word) -> bool:
    """Membership of a concrete configuration (sequence of (id, loc, rho))
    in the atom language of the automaton."""
    cur = set(a.initial)
    for (cid, loc, rho) in word:
        nxt = set()
        for (s, l, t) in a.transitions:
            if s in cur and letter_accepts(ctx, l, cid, loc, dict(rho)):
                nxt.add(t)
        cur = nxt
        if not cur:
            return False
    return bool(cur & a.final)


def bounded_language(ctx: DomainContext, a: LatticeAutomaton, max_len: int, universe):
    """Enumerate the accepted atom words up to a length bound over a finite
    value universe (test oracle; exponential, keep the inputs tiny)."""
    from .domain import concretize_bounded

    out = set()
    frontier = [((), q) for q in a.initial]
    while frontier:
        word, q = frontier.pop()
        if q in a.final and word:
            out.add(word)
        if len(word) >= max_len:
            continue
        for (s, l, t) in a.transitions:
            if s == q:
                for atom in concretize_bounded(ctx, l, universe):
                    frontier.append((word + (atom,), t))
    return out


# ---------------------------------------------------------------------------
# export


def _bound_json(b):
    if b == NEG_INF:
        return "-inf"
    if b == POS_INF:
        return "+inf"
    return f"{b.numerator}/{b.denominator}"


def _bound_from_json(s):
    if s == "-inf":
        return NEG_INF
    if s == "+inf":
        return POS_INF
    num, _, den = s.partition("/")
    return Fraction(int(num), int(den))


def interval_to_json(itv: Interval):
    return {"lo": _bound_json(itv.lo), "hi": _bound_json(itv.hi)}


def interval_from_json(d) -> Interval:
    return Interval(_bound_from_json(d["lo"]), _bound_from_json(d["hi"]))


def _frac_json(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _frac_from_json(s) -> Fraction:
    num, _, den = s.partition("/")
    return Fraction(int(num), int(den))


def env_to_json(env):
    if isinstance(env, IntervalEnv):
        return {"kind": "interval",
                "vars": {n: interval_to_json(itv) for n, itv in env.items}}
    return {"kind": "affine",
            "vars": list(env.vars),
            "rows": [[[_frac_json(k) for k in coeffs], _frac_json(c)]
                     for coeffs, c in env.rows]}


def env_from_json(d):
    if d["kind"] == "interval":
        return IntervalEnv.make({n: interval_from_json(v) for n, v in d["vars"].items()})
    rows = tuple(
        (tuple(_frac_from_json(k) for k in coeffs), _frac_from_json(c))
        for coeffs, c in d["rows"]
    )
    return AffineEnv(tuple(d["vars"]), rows)


def letter_to_json(l: AbstractLocalState):
    return {"id": interval_to_json(l.pid), "loc": l.loc, "env": env_to_json(l.env)}


def letter_from_json(d) -> AbstractLocalState:
    return AbstractLocalState(interval_from_json(d["id"]), d["loc"], env_from_json(d["env"]))


def to_json(a: LatticeAutomaton) -> dict:
    return {
        "states": sorted(a.states),
        "initial": sorted(a.initial),
        "final": sorted(a.final),
        "transitions": [
            {"src": s, "dst": t, "label": letter_to_json(l)}
            for (s, l, t) in a.sorted_transitions()
        ],
    }


def from_json(d) -> LatticeAutomaton:
    return LatticeAutomaton(
        frozenset(d["states"]),
        frozenset(d["initial"]),
        frozenset(d["final"]),
        frozenset((e["src"], letter_from_json(e["label"]), e["dst"]) for e in d["transitions"]),
    )


def _env_str(env) -> str:
    return str(env)


def to_dot(a: LatticeAutomaton, name="reach") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for q in sorted(a.states):
        shape_attr = "doublecircle" if q in a.final else "circle"
        lines.append(f'  "{q}" [shape={shape_attr}];')
    for i, q in enumerate(sorted(a.initial)):
        lines.append(f'  "init{i}" [shape=point]; "init{i}" -> "{q}";')
    for (s, l, t) in a.sorted_transitions():
        label = f"{l.pid} | {l.loc} | {_env_str(l.env)}"
        label = label.replace('"', "'")
        lines.append(f'  "{s}" -> "{t}" [label="{label}"];')
    lines.append("}")
    return "\n".join(lines)
