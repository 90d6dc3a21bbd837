"""Command-line driver: parse, analyze, check properties, export automata.

Exit codes: 0 safe / no alarms, 1 property alarm, 2 potential deadlock
(with --deadlock and no property alarm), 3 usage or parse error, 4 step
budget exhausted.  Identical inputs produce byte-identical reports.
"""
from __future__ import annotations

import argparse
import json
import re
import sys

from .automaton import to_dot, to_json
from .domain import Constraint, GuardAtom, GuardElement, Interval
from .engine import (
    AnalysisConfig,
    BudgetExhausted,
    PropertyAutomaton,
    PropertyLocationError,
    check_deadlock,
    check_safety,
    fixpoint,
)
from .frontend import (
    CompileError,
    ParseError,
    compile_program,
    dump_semantics,
    parse,
    parse_expr,
)


class PropertyParseError(Exception):
    pass


def parse_property(text: str) -> PropertyAutomaton:
    """Textual bad-configuration automaton.

    Lines: ``state NAME [initial] [final]`` declares a state;
    ``A -> B : items`` adds a transition where items are comma-separated:
    ``true`` (any letter), ``loc=lN`` or ``loc=any``, and constraints
    ``id <op> expr`` / ``var <op> expr`` over id and constants."""
    states = {}
    transitions = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("state "):
            parts = line.split()
            name = parts[1]
            flags = parts[2:]
            bad = [f for f in flags if f not in ("initial", "final")]
            if bad:
                raise PropertyParseError(f"line {lineno}: unknown flag {bad[0]!r}")
            states[name] = ("initial" in flags, "final" in flags)
            continue
        if "->" not in line or ":" not in line:
            raise PropertyParseError(f"line {lineno}: expected 'src -> dst : label'")
        head, label = line.split(":", 1)
        src, _, dst = head.partition("->")
        src, dst = src.strip(), dst.strip()
        if src not in states or dst not in states:
            raise PropertyParseError(f"line {lineno}: undeclared state in {src!r} -> {dst!r}")
        transitions.add((src, _parse_label(label.strip(), lineno), dst))
    if not states:
        raise PropertyParseError("property declares no states")
    initial = frozenset(n for n, (ini, _) in states.items() if ini)
    final = frozenset(n for n, (_, fin) in states.items() if fin)
    if not initial or not final:
        raise PropertyParseError("property needs at least one initial and one final state")
    return PropertyAutomaton(frozenset(states), initial, final, frozenset(transitions))


def _parse_label(label: str, lineno: int) -> GuardElement:
    if label == "true":
        return GuardElement.top()
    loc = None
    pid = Interval.top()
    constraints = []
    for item in (p.strip() for p in label.split(",")):
        if not item:
            raise PropertyParseError(f"line {lineno}: empty label item")
        if re.match(r"loc\s*=", item):
            value = item.partition("=")[2].strip()
            if not value:
                raise PropertyParseError(f"line {lineno}: bad location item {item!r}")
            loc = None if value == "any" else value
            continue
        for op in ("<=", ">=", "==", "!=", "<", ">"):
            if op in item:
                lhs, _, rhs = item.partition(op)
                lhs = lhs.strip()
                try:
                    rhs_expr = parse_expr(rhs.strip())
                except ParseError as exc:
                    raise PropertyParseError(f"line {lineno}: {exc}") from exc
                constraints.append(Constraint(lhs, op, rhs_expr))
                break
        else:
            raise PropertyParseError(f"line {lineno}: cannot parse label item {item!r}")
    atom = GuardAtom(pid, None, tuple(constraints))
    if loc is None:
        return GuardElement.anywhere(atom)
    return GuardElement(((loc, atom),), None)


def _procs_value(text: str):
    if text in ("unbounded", "any"):
        return text
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--procs expects an integer, 'unbounded' or 'any'")
    if n < 1:
        raise argparse.ArgumentTypeError("--procs must be at least 1")
    return n


def _bounded_int(minimum):
    def convert(text):
        try:
            n = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
        if n < minimum:
            raise argparse.ArgumentTypeError(f"must be at least {minimum}")
        return n
    return convert


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latreach", add_help=True)
    sub = ap.add_subparsers(dest="command", required=True)
    an = sub.add_parser("analyze", help="analyze a program")
    an.add_argument("program", help="program source file")
    an.add_argument("--domain", choices=("interval", "affine"), default="interval")
    an.add_argument("--procs", type=_procs_value, default=1)
    an.add_argument("--property", dest="property_file")
    an.add_argument("--deadlock", action="store_true")
    an.add_argument("--dot")
    an.add_argument("--json", dest="json_path")
    an.add_argument("--widening-delay", type=_bounded_int(0), default=2)
    an.add_argument("--shape-k", type=_bounded_int(1), default=1)
    an.add_argument("--budget", type=_bounded_int(1), default=500)
    an.add_argument("--dump-semantics", dest="dump_semantics_path")
    return ap


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 3 if exc.code not in (0, None) else 0

    out = sys.stdout
    try:
        with open(args.program, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    try:
        ast = parse(source)
        sem = compile_program(ast, args.domain, args.procs)
    except (ParseError, CompileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    bad = None
    if args.property_file:
        try:
            with open(args.property_file, "r", encoding="utf-8") as fh:
                bad = parse_property(fh.read())
        except (OSError, PropertyParseError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3

    if args.dump_semantics_path:
        with open(args.dump_semantics_path, "w", encoding="utf-8") as fh:
            json.dump(dump_semantics(sem), fh, indent=2, sort_keys=True)
            fh.write("\n")

    config = AnalysisConfig(widening_delay=args.widening_delay,
                            shape_k=args.shape_k, step_budget=args.budget)
    try:
        result = fixpoint(sem, config)
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4

    nodes, trans = result.reach.size()
    print(f"program: {args.program}", file=out)
    print(f"domain: {args.domain}  procs: {args.procs}", file=out)
    print(f"iterations: {result.iterations}", file=out)
    print(f"reach automaton: {nodes} nodes / {trans} transitions", file=out)
    for kind, desc in result.alarms:
        print(f"alarm[{kind}]: {desc}", file=out)

    exit_code = 0
    if bad is not None:
        try:
            verdict = check_safety(sem, result, bad)
        except PropertyLocationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        if verdict.safe:
            print("property: SAFE", file=out)
        else:
            print("property: ALARM", file=out)
            print(f"witness: {verdict.witness}", file=out)
            exit_code = 1

    if args.deadlock:
        witnesses = check_deadlock(sem, result)
        if witnesses:
            print(f"potential deadlocks: {len(witnesses)}", file=out)
            for w in witnesses[:20]:
                print(f"deadlock witness: {w.description}", file=out)
            if exit_code == 0:
                exit_code = 2
        else:
            print("potential deadlocks: 0", file=out)

    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(to_dot(result.reach))
            fh.write("\n")
    if args.json_path:
        with open(args.json_path, "w", encoding="utf-8") as fh:
            json.dump(to_json(result.reach), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return exit_code


def console_main() -> None:
    raise SystemExit(main())
