"""Fixpoint engine: reachability computation, safety and deadlock checks.

One analysis step applies the local-step transducer and every
communication rule, then normalizes the union.  Iteration joins for a
few rounds and then widens; label-level widening fires only at loop
heads, the entry location of creating programs, and collector locations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from .automaton import (
    LatticeAutomaton,
    includes,
    is_empty,
    normalize,
    trim,
    union,
    union_all,
    widen_automata,
)
from .domain import (
    AbstractLocalState,
    AlarmSink,
    loc_sort_key,
    meet_guard,
)
from .frontend import CompiledSemantics
from .rules import apply_rule
from .transducer import apply_transducer


@dataclass(frozen=True)
class AnalysisConfig:
    widening_delay: int = 2
    shape_k: int = 1
    step_budget: int = 500

    def __post_init__(self):
        assert self.step_budget >= 1 and self.widening_delay >= 0 and self.shape_k >= 1


@dataclass
class AnalysisResult:
    reach: LatticeAutomaton
    iterations: int
    alarms: list  # (kind, description) pairs, sorted


class BudgetExhausted(Exception):
    """The step budget ran out before a post-fixpoint was reached."""


def step(sem: CompiledSemantics, s: LatticeAutomaton, sink: AlarmSink = None
         ) -> LatticeAutomaton:
    """One application of the extended transducer: local steps union the
    image of every communication rule."""
    parts = [apply_transducer(sem.ctx, sem.transducer, s, sink)]
    for rule in sem.rules:
        parts.append(apply_rule(sem.ctx, rule, s, sink))
    return union_all(parts)


def fixpoint(sem: CompiledSemantics, config: AnalysisConfig = AnalysisConfig()
             ) -> AnalysisResult:
    """Iterate to a post-fixpoint of the extended transducer.

    Joins only for the first widening_delay rounds, then widening
    restricted to the program's widening locations; if the iteration still
    has not settled well past that point, the restriction is dropped so
    every increasing chain is eventually cut."""
    sink = AlarmSink()
    s = normalize(sem.initial)
    escalate_at = config.widening_delay + 40
    for k in range(config.step_budget):
        image = step(sem, s, sink)
        if includes(s, image):
            return AnalysisResult(s, k + 1, sorted(sink.alarms))
        grown = union(s, image)
        if k < config.widening_delay:
            s = grown
        elif k < escalate_at:
            s = widen_automata(s, grown, widen_locs=sem.widen_locs, k=config.shape_k)
        else:
            s = widen_automata(s, grown, widen_locs=None, k=config.shape_k)
    raise BudgetExhausted(f"no post-fixpoint within {config.step_budget} steps")


# ---------------------------------------------------------------------------
# safety properties


@dataclass(frozen=True)
class PropertyAutomaton:
    """Bad-configuration automaton; labels are guard elements."""

    states: frozenset
    initial: frozenset
    final: frozenset
    transitions: frozenset  # (src, GuardElement, dst)

    def locations(self):
        locs = set()
        for (_, g, _) in self.transitions:
            if g.by_loc is not None:
                locs.update(l for l, _ in g.by_loc)
        return locs


@dataclass(frozen=True)
class SafetyVerdict:
    safe: bool
    witness: Optional[str] = None


class PropertyLocationError(Exception):
    pass


def _product_with_property(sem, reach: LatticeAutomaton, bad: PropertyAutomaton):
    """Product automaton of the reach set with the bad automaton; labels
    are reach letters refined by the guards."""
    trans = set()
    for (sa, letter, ta) in reach.transitions:
        for (sb, guard, tb) in bad.transitions:
            m = meet_guard(sem.ctx, letter, guard)
            if m is not None:
                trans.add(((sa, sb), m, (ta, tb)))
    states = {q for (q, _, _) in trans} | {q for (_, _, q) in trans}
    initial = {(qa, qb) for qa in reach.initial for qb in bad.initial}
    final = {(qa, qb) for qa in reach.final for qb in bad.final}
    states |= initial | final
    return LatticeAutomaton(frozenset(states), frozenset(initial),
                            frozenset(final), frozenset(trans))


def _shortest_witness(product: LatticeAutomaton) -> Optional[str]:
    """Deterministic BFS witness: shortest accepting word, ties broken by
    the lexicographic order of the location sequence."""
    product = trim(product)
    if product.is_trivially_empty:
        return None
    best = {}
    frontier = {q: () for q in sorted(product.initial, key=repr)}
    for q, path in frontier.items():
        best[q] = path
    for _ in range(len(product.states) + 1):
        hits = [best[q] for q in best if q in product.final]
        if hits:
            word = min(hits, key=lambda w: [loc_sort_key(l.loc) for l in w])
            return " . ".join(str(letter) for letter in word)
        nxt = {}
        for (s, l, t) in sorted(product.transitions,
                                key=lambda e: (repr(e[0]), e[1].sort_key(), repr(e[2]))):
            if s in best:
                cand = best[s] + (l,)
                if t not in nxt or [loc_sort_key(x.loc) for x in cand] < \
                        [loc_sort_key(x.loc) for x in nxt[t]]:
                    nxt[t] = cand
        best = nxt
        if not best:
            return None
    return None


def check_safety(sem: CompiledSemantics, result: AnalysisResult,
                 bad: PropertyAutomaton) -> SafetyVerdict:
    """Safe iff the reach set misses the bad language; on alarm, produce
    one shortest witness word template."""
    known = set(sem.cfg.locations)
    for e_src in sem.blocking_locs:
        known.add(e_src)
    unknown = bad.locations() - known
    if unknown:
        raise PropertyLocationError(
            f"property mentions unknown locations: {', '.join(sorted(unknown))}")
    product = _product_with_property(sem, result.reach, bad)
    witness = _shortest_witness(product)
    if witness is None:
        return SafetyVerdict(True)
    return SafetyVerdict(False, witness)


# ---------------------------------------------------------------------------
# deadlock detection


@dataclass(frozen=True)
class DeadlockWitness:
    locations: tuple
    description: str


def _candidate_paths(reach: LatticeAutomaton, blocking: frozenset, limit: int = 4096):
    """Accepting paths whose labels all sit at blocking/exit locations;
    each transition is used at most twice (one loop unrolling)."""
    out = []
    edges = [e for e in reach.sorted_transitions() if e[1].loc in blocking]

    def dfs(q, word, used):
        if len(out) >= limit:
            return
        if q in reach.final and word:
            out.append(word)
        for e in edges:
            if e[0] == q and used.get(e, 0) < 2:
                used[e] = used.get(e, 0) + 1
                dfs(e[2], word + (e[1],), used)
                used[e] -= 1

    for q in sorted(reach.initial, key=repr):
        dfs(q, (), {})
    return out


def _rule_fires_on_word(sem, word) -> bool:
    """Can any rule advance some concretisation of the word?  Checked by
    applying every rule to the word's chain automaton."""
    chain = normalize(LatticeAutomaton.from_word(word))
    for rule in sem.rules:
        if not is_empty(apply_rule(sem.ctx, rule, chain)):
            return True
    return False


def _transducer_moves_letter(sem, word) -> bool:
    """True when a non-inactivity local rule applies to some letter."""
    for letter in word:
        for (_, rule, _) in sem.transducer.rules:
            if rule.name == "inactivity":
                continue
            matched = meet_guard(sem.ctx, letter, rule.guard[0])
            if matched is None:
                continue
            from .transducer import eval_letter_out

            img = eval_letter_out(sem.ctx, rule.outputs[0], (matched,))
            if img is not None:
                return True
    return False


def _atom_refinements(sem, word, cap: int = 512):
    """Split every letter of the word into single-id, single-value letters
    when the value ranges are small and finite; [] when infeasible."""
    from .domain import Interval, IntervalEnv

    per_letter = []
    for letter in word:
        options = []
        pid = letter.pid
        if pid.lo == float("-inf") or pid.hi == float("inf") or pid.hi - pid.lo > 8:
            return []
        if not isinstance(letter.env, IntervalEnv):
            return []
        ids = [pid.lo + i for i in range(int(pid.hi - pid.lo) + 1)]
        var_choices = []
        for name, itv in letter.env.items:
            if itv.lo == float("-inf") or itv.hi == float("inf"):
                var_choices.append([(name, None)])
                continue
            if itv.hi - itv.lo > 4 or (itv.hi - itv.lo).denominator != 1:
                var_choices.append([(name, None)])
                continue
            var_choices.append([(name, itv.lo + k) for k in range(int(itv.hi - itv.lo) + 1)])
        import itertools as it

        for pid_v in ids:
            for combo in it.product(*var_choices) if var_choices else [()]:
                env = dict(letter.env.items)
                for name, val in combo:
                    if val is not None:
                        env[name] = Interval.point(val)
                refined = IntervalEnv.make(env)
                if refined is not None:
                    options.append(AbstractLocalState(Interval.point(pid_v), letter.loc, refined))
        if not options:
            return []
        per_letter.append(options)
        total = 1
        for opts in per_letter:
            total *= len(opts)
        if total > cap:
            return []
    import itertools as it

    return [tuple(w) for w in it.product(*per_letter)]


def check_deadlock(sem: CompiledSemantics, result: AnalysisResult) -> List[DeadlockWitness]:
    """Potential deadlocks: abstract words whose letters all wait at
    blocking locations (at least one off the exit) and that no rule and no
    local step can advance.  Alarms may be spurious; when the coarse
    letters are joins, small finite refinements are also tried so that a
    genuinely stuck combination inside a joined label is still reported."""
    witnesses = {}
    blocking = sem.blocking_locs
    exit_loc = sem.cfg.exit
    for word in _candidate_paths(result.reach, blocking):
        if all(l.loc == exit_loc for l in word):
            continue
        candidates = [word]
        if _rule_fires_on_word(sem, word) or _transducer_moves_letter(sem, word):
            candidates = [w for w in _atom_refinements(sem, word)
                          if not (_rule_fires_on_word(sem, w)
                                  or _transducer_moves_letter(sem, w)
                                  or all(l.loc == exit_loc for l in w))]
            if not candidates:
                continue
        chosen = candidates[0]
        locs = tuple(l.loc for l in chosen)
        if locs not in witnesses:
            witnesses[locs] = DeadlockWitness(
                locs, " . ".join(str(l) for l in chosen))
    return [witnesses[k] for k in sorted(witnesses, key=lambda ls: [loc_sort_key(l) for l in ls])]
