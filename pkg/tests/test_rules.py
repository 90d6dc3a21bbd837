import random
from fractions import Fraction

import pytest

import latreach.expr as E
from latreach.automaton import (
    LatticeAutomaton,
    accepts_concrete,
    bounded_language,
    is_empty,
    normalize,
    union_all,
)
from latreach.domain import (
    AbstractLocalState,
    DomainContext,
    GuardElement,
    Interval,
    IntervalEnv,
    TOP_GUARD,
)
from latreach.frontend import build_cfg, compile_program, parse
from latreach.rules import (
    IDENTITY_H,
    RewriteRule,
    apply_rule,
    collector_loc,
    lock_loc,
    make_reduce_rules,
    make_send_receive_rule,
    rule_from_json,
    rule_to_json,
)
from latreach.transducer import LetterOut
from latreach.concrete import ConcreteLocalState, config_word, post

from helpers import load_program, rule_image_words

F = Fraction
CTX = DomainContext("interval", ("next", "x"))


def letter(pid, loc, x=None, nxt=None):
    env = {}
    if x is not None:
        env["x"] = Interval.point(x)
    if nxt is not None:
        env["next"] = Interval.point(nxt)
    return AbstractLocalState(Interval.point(pid), loc, IntervalEnv.make(env))


@pytest.fixture(scope="module")
def chain():
    ast = parse(load_program("create_chain.prog"))
    cfg = build_cfg(ast)
    sem = compile_program(ast, "interval", 3)
    edges = {type(e.instr).__name__: e for e in cfg.edges}
    return ast, cfg, sem, edges


def _comm_rules(sem):
    return [r for r in sem.rules if "send" in r.name or "recv" in r.name]


# ---------------------------------------------------------------------------
# send/receive


def test_send_receive_schema_guard_shape(chain):
    _, cfg, sem, edges = chain
    send_e = edges["Send"]
    recv_e = edges["Receive"]
    fwd, mirror = make_send_receive_rule(send_e, recv_e)
    # forward ordering: top* . <_, send-loc, _> . top* . <_, recv-loc, _> . top*
    assert fwd.stars == (TOP_GUARD, TOP_GUARD, TOP_GUARD)
    assert [w[0].by_loc[0][0] for w in fwd.words] == [send_e.src, recv_e.src]
    assert [w[0].by_loc[0][0] for w in mirror.words] == [recv_e.src, send_e.src]
    assert all(h == IDENTITY_H for h in fwd.h_specs)


def test_send_receive_on_example_word(chain):
    """Rule image of a three-process word against the concrete oracle: the
    receiver takes the sender's value, the sender only advances."""
    _, cfg, sem, edges = chain
    send_loc, recv_loc = edges["Send"].src, edges["Receive"].src
    end_loc = cfg.exit
    word = [letter(0, end_loc, x=5, nxt=1),
            letter(1, send_loc, x=9, nxt=2),
            letter(2, recv_loc, x=0, nxt=2)]
    a = normalize(LatticeAutomaton.from_word(word))
    img = union_all([apply_rule(sem.ctx, r, a) for r in _comm_rules(sem)])
    conc = tuple(ConcreteLocalState(int(l.pid.lo), l.loc,
                                    tuple(sorted({
                                        "x": dict(l.env.items)["x"].lo,
                                        "next": dict(l.env.items)["next"].lo}.items())))
                 for l in word)
    succs = post(cfg, conc)
    assert len(succs) == 1  # only the communication is enabled
    succ = config_word(next(iter(succs)))
    assert accepts_concrete(sem.ctx, img, succ)
    # oracle authority: receiver got x=9 and moved to the receive target
    recv = [s for s in succ if s[0] == 2][0]
    assert dict(recv[2])["x"] == 9
    assert recv[1] == edges["Receive"].dst
    # bounded enumeration: the image contains nothing but oracle successors
    universe = [0, 1, 2, 5, 9]
    for w in bounded_language(sem.ctx, img, 3, universe):
        assert w == succ


def test_send_receive_partner_mismatch_contributes_nothing(chain):
    _, cfg, sem, edges = chain
    send_loc, recv_loc = edges["Send"].src, edges["Receive"].src
    word = [letter(1, send_loc, x=13, nxt=2), letter(6, recv_loc, x=0, nxt=0)]
    a = normalize(LatticeAutomaton.from_word(word))
    img = union_all([apply_rule(sem.ctx, r, a) for r in _comm_rules(sem)])
    assert is_empty(img)


def test_identity_rule_keeps_sub_language():
    rule = RewriteRule(
        "watch", stars=(TOP_GUARD, TOP_GUARD),
        words=((GuardElement.at("l1"),),),
        f_specs=((), (LetterOut(base=0),), ()),
        h_specs=(IDENTITY_H, IDENTITY_H))
    a = normalize(LatticeAutomaton.from_word([
        letter(0, "l0", x=0), letter(1, "l1", x=1)]))
    img = apply_rule(CTX, rule, a)
    universe = [0, 1]
    assert bounded_language(CTX, img, 2, universe) == bounded_language(CTX, a, 2, universe)


def test_no_guard_match_is_empty():
    rule = RewriteRule(
        "nowhere", stars=(TOP_GUARD, TOP_GUARD),
        words=((GuardElement.at("l99"),),),
        f_specs=((), (LetterOut(base=0),), ()),
        h_specs=(IDENTITY_H, IDENTITY_H))
    a = normalize(LatticeAutomaton.from_word([letter(0, "l0", x=0)]))
    assert is_empty(apply_rule(CTX, rule, a))


# ---------------------------------------------------------------------------
# create


def test_create_appends_fresh_letter(chain):
    ast, cfg, sem, edges = chain
    create_e = edges["Create"]
    word = [letter(0, cfg.exit, x=5, nxt=1), letter(1, create_e.src, x=0, nxt=0)]
    a = normalize(LatticeAutomaton.from_word(word))
    rule = [r for r in sem.rules if r.name.startswith("create")][0]
    img = apply_rule(sem.ctx, rule, a)
    # concrete oracle: fresh id is the word length (2)
    conc = tuple(ConcreteLocalState(int(l.pid.lo), l.loc,
                                    tuple(sorted({
                                        "x": dict(l.env.items).get("x", Interval.point(0)).lo,
                                        "next": dict(l.env.items).get("next", Interval.point(0)).lo}.items())))
                 for l in word)
    succs = [config_word(c) for c in post(cfg, conc)]
    created = [w for w in succs if len(w) == 3]
    assert created and all(w[2][0] == 2 for w in created)
    for w in created:
        assert accepts_concrete(sem.ctx, img, w)
    # the abstract fresh letter is pinned to id 2 with a zeroed environment
    spawned = [l for (_, l, _) in img.transitions if l.loc == cfg.entry]
    assert spawned and all(l.pid == Interval.point(2) for l in spawned)


def test_create_fresh_id_on_single_letter(chain):
    ast, cfg, sem, edges = chain
    create_e = edges["Create"]
    a = normalize(LatticeAutomaton.from_word([letter(0, create_e.src, x=1, nxt=0)]))
    rule = [r for r in sem.rules if r.name.startswith("create")][0]
    img = apply_rule(sem.ctx, rule, a)
    two = ((0, create_e.dst, (("next", F(1)), ("x", F(1)))),
           (1, cfg.entry, (("next", F(0)), ("x", F(0)))))
    assert accepts_concrete(sem.ctx, img, two)


# ---------------------------------------------------------------------------
# broadcast


def test_broadcast_requires_everyone_at_location():
    src = '''
    x := id;
    broadcast(0, x);
    '''
    ast = parse(src)
    sem = compile_program(ast, "interval", 2)
    bcast = [r for r in sem.rules if r.name.startswith("broadcast")][0]
    # one letter elsewhere: no contribution
    off = normalize(LatticeAutomaton.from_word([
        AbstractLocalState(Interval.point(0), "l1", IntervalEnv.make({"x": Interval.point(0)})),
        AbstractLocalState(Interval.point(1), "l0", IntervalEnv.make({"x": Interval.point(1)})),
    ]))
    assert is_empty(apply_rule(sem.ctx, bcast, off))
    # all at the broadcast location: the root value spreads
    on = normalize(LatticeAutomaton.from_word([
        AbstractLocalState(Interval.point(0), "l1", IntervalEnv.make({"x": Interval.point(0)})),
        AbstractLocalState(Interval.point(1), "l1", IntervalEnv.make({"x": Interval.point(1)})),
    ]))
    img = apply_rule(sem.ctx, bcast, on)
    spread = ((0, "l2", (("x", F(0)),)), (1, "l2", (("x", F(0)),)))
    assert accepts_concrete(sem.ctx, img, spread)


# ---------------------------------------------------------------------------
# reduce: the three collector rules


@pytest.fixture(scope="module")
def sum2():
    ast = parse(load_program("sum_reduce.prog"))
    sem = compile_program(ast, "interval", 2)
    spawn, swap, deliver = sem.rules
    return sem, spawn, swap, deliver


def rl(pid, loc, res, total=0):
    return AbstractLocalState(Interval.point(pid), loc, IntervalEnv.make({
        "res": Interval.point(res), "total": Interval.point(total)}))


def coll(total):
    return AbstractLocalState(Interval.point(-1), collector_loc("l1"),
                              IntervalEnv.make({"total": Interval.point(total)}))


def test_reduce_neutral_elements():
    plus = parse("rat t; rat s; reduce(t, s, +, 0);")
    times = parse("rat t; rat s; reduce(t, s, *, 0);")
    for ast, neutral in ((plus, F(0)), (times, F(1))):
        sem = compile_program(ast, "interval", 2)
        spawn = sem.rules[0]
        (collector_spec,) = spawn.f_specs[0]
        assert collector_spec.updates[0][1] == E.Const(neutral)
        assert collector_spec.pid == ("const", F(-1))


def test_reduce_unsupported_operator():
    class FakeEdge:
        pass

    from latreach.frontend import Edge, Reduce

    edge = Edge("l0", Reduce("t", "s", "+", E.Const(F(0))), "l1")
    bad = Edge("l0", Reduce("t", "s", "-", E.Const(F(0))), "l1")
    make_reduce_rules(edge)
    with pytest.raises(Exception):
        make_reduce_rules(bad)


def test_reduce_sweep_golden(sum2):
    """The collector sweep on res = 1/2, 1/4: spawn locks and prepends the
    collector with a zero accumulator, each swap folds one value, delivery
    unlocks everyone and writes 3/4 into the root."""
    sem, spawn, swap, deliver = sum2
    at_reduce = normalize(LatticeAutomaton.from_word([
        rl(0, "l1", F(1, 2)), rl(1, "l1", F(1, 4))]))
    lk = lock_loc("l1")

    s1 = apply_rule(sem.ctx, spawn, at_reduce)
    w1 = (
        (-1, collector_loc("l1"), (("res", F(0)), ("total", F(0)))),
        (0, lk, (("res", F(1, 2)), ("total", F(0)))),
        (1, lk, (("res", F(1, 4)), ("total", F(0)))),
    )
    assert accepts_concrete(sem.ctx, s1, w1)

    s2 = apply_rule(sem.ctx, swap, s1)
    w2 = (
        (0, lk, (("res", F(1, 2)), ("total", F(0)))),
        (-1, collector_loc("l1"), (("res", F(0)), ("total", F(1, 2)))),
        (1, lk, (("res", F(1, 4)), ("total", F(0)))),
    )
    assert accepts_concrete(sem.ctx, s2, w2)

    s3 = apply_rule(sem.ctx, swap, s2)
    w3 = (
        (0, lk, (("res", F(1, 2)), ("total", F(0)))),
        (1, lk, (("res", F(1, 4)), ("total", F(0)))),
        (-1, collector_loc("l1"), (("res", F(0)), ("total", F(3, 4)))),
    )
    assert accepts_concrete(sem.ctx, s3, w3)

    s4 = apply_rule(sem.ctx, deliver, s3)
    w4 = (
        (0, "l2", (("res", F(1, 2)), ("total", F(3, 4)))),
        (1, "l2", (("res", F(1, 4)), ("total", F(0)))),
    )
    assert accepts_concrete(sem.ctx, s4, w4)


def test_reduce_swap_exhausted_then_deliver(sum2):
    sem, spawn, swap, deliver = sum2
    rightmost = normalize(LatticeAutomaton.from_word([
        rl(0, lock_loc("l1"), F(1, 2)), rl(1, lock_loc("l1"), F(1, 4)), coll(F(3, 4))]))
    assert is_empty(apply_rule(sem.ctx, swap, rightmost))
    assert not is_empty(apply_rule(sem.ctx, deliver, rightmost))


def test_reduce_letter_count_invariant(sum2):
    sem, spawn, swap, deliver = sum2
    at_reduce = normalize(LatticeAutomaton.from_word([
        rl(0, "l1", F(1, 2)), rl(1, "l1", F(1, 4))]))
    s1 = apply_rule(sem.ctx, spawn, at_reduce)
    universe = [-1, 0, F(1, 2), F(1, 4), F(3, 4), 1]
    assert {len(w) for w in bounded_language(sem.ctx, s1, 4, universe)} == {3}
    s2 = apply_rule(sem.ctx, swap, s1)
    assert {len(w) for w in bounded_language(sem.ctx, s2, 4, universe)} == {3}
    s4 = apply_rule(sem.ctx, deliver, s2)
    # deliver needs the collector at the right end; after one swap it is
    # mid-word, so the only contribution is empty
    s3 = apply_rule(sem.ctx, swap, s2)
    s5 = apply_rule(sem.ctx, deliver, s3)
    assert {len(w) for w in bounded_language(sem.ctx, s5, 4, universe)} == {2}


# ---------------------------------------------------------------------------
# serialization


def test_rule_json_round_trip(chain):
    _, cfg, sem, edges = chain
    for rule in sem.rules:
        blob = rule_to_json(rule)
        back = rule_from_json(blob)
        a = normalize(LatticeAutomaton.from_word([
            letter(0, cfg.exit, x=5, nxt=1),
            letter(1, edges["Send"].src, x=9, nxt=2),
            letter(2, edges["Receive"].src, x=0, nxt=2)]))
        assert apply_rule(sem.ctx, back, a) == apply_rule(sem.ctx, rule, a)


# ---------------------------------------------------------------------------
# Theorem-style soundness against the word-level interpreter


def _random_rule(rng):
    locs = ["l0", "l1"]
    n = rng.randint(1, 2)
    words = []
    for _ in range(n):
        loc = rng.choice(locs)
        words.append((GuardElement.at(loc),))
    stars = tuple(rng.choice([TOP_GUARD, GuardElement.at(rng.choice(locs))])
                  for _ in range(n + 1))
    f_specs = [()]
    for i in range(n):
        outs = []
        for _ in range(rng.randint(0, 2)):
            base = rng.randint(0, n - 1)
            updates = ()
            if rng.random() < 0.5:
                updates = (("x", E.BinOp("+", E.Var("x"), E.Const(F(rng.randint(-1, 1))))),)
            conds = ()
            if rng.random() < 0.3:
                conds = ((base, E.Const(F(rng.randint(-1, 2)))),)
            outs.append(LetterOut(base=base, loc=rng.choice(locs),
                                  updates=updates, conds=conds))
        f_specs.append(tuple(outs))
    f_specs.append(())
    h_specs = tuple(IDENTITY_H for _ in range(n + 1))
    return RewriteRule("rnd", stars, tuple(words), tuple(f_specs), h_specs)


def _random_automaton(rng):
    locs = ["l0", "l1"]
    edges = set()
    nstates = rng.randint(2, 3)
    for _ in range(rng.randint(1, 4)):
        s, t = rng.randint(0, nstates - 1), rng.randint(0, nstates - 1)
        lo_p = rng.randint(-2, 1)
        lo_x = rng.randint(-2, 1)
        env = IntervalEnv.make({"x": Interval.range(lo_x, rng.randint(lo_x, 2))})
        lbl = AbstractLocalState(Interval.range(lo_p, rng.randint(lo_p, 2)),
                                 rng.choice(locs), env)
        edges.add((s, lbl, t))
    return LatticeAutomaton(frozenset(range(nstates)), frozenset({0}),
                            frozenset({rng.randint(0, nstates - 1)}), frozenset(edges))


def test_rule_image_inclusion_randomized():
    """Direct word-level rewriting of every accepted atom word lands inside
    the applied-rule automaton (Theorem-1 direction)."""
    ctx = DomainContext("interval", ("x",))
    rng = random.Random(909)
    universe = list(range(-2, 3))
    checked = 0
    for trial in range(100):
        rule = _random_rule(rng)
        a = normalize(_random_automaton(rng))
        if a.is_trivially_empty:
            continue
        img = apply_rule(ctx, rule, a)
        words = sorted(bounded_language(ctx, a, 3, universe))
        rng.shuffle(words)
        for w in words[:8]:
            for out in rule_image_words(rule, w):
                checked += 1
                assert accepts_concrete(ctx, img, out), (trial, w, out)
    assert checked > 100  # guard against a vacuous run
