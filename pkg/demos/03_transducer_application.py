"""Walkthrough: applying a lattice transducer to a lattice automaton.

Local instructions become self-loop rules of a one-state transducer; the
application is a product construction that rewrites every matching path.
The inactivity rule (match anything, change nothing) makes the image
contain the original language, so one application computes "zero or one
local step per process".
"""
from latreach.automaton import LatticeAutomaton, normalize
from latreach.domain import (
    AbstractLocalState,
    DomainContext,
    GuardElement,
    Interval,
    IntervalEnv,
)
from latreach.frontend import Assign, parse_expr
from latreach.transducer import (
    LatticeTransducer,
    LetterOut,
    TransducerRule,
    apply_transducer,
    transducer_to_dot,
)

ctx = DomainContext("interval", ("x",))

bump = TransducerRule(
    "assign_x_plus_4",
    (GuardElement.at("l7"),),
    (LetterOut(base=0, loc="l8", instr=Assign("x", parse_expr("x + 4"))),))
idle = TransducerRule("inactivity", (GuardElement.top(),), (LetterOut(base=0),))
t = LatticeTransducer.single_state([bump, idle])
print(transducer_to_dot(t))

singleton = normalize(LatticeAutomaton.from_word([
    AbstractLocalState(Interval.point(0), "l7",
                       IntervalEnv.make({"x": Interval.point(1)}))]))
print("input automaton (one process, x = 1, before the assignment):")
print(singleton)

out = apply_transducer(ctx, t, singleton)
print()
print("image: the process either idled or executed x := x + 4:")
print(out)
