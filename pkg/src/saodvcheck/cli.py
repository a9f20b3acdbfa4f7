"""Command line: ``verify``, ``replay`` and ``export-promela``.

Exit statuses: 0 holds, 1 violated, 2 depth bound or resource limit reached,
3 configuration or usage error, 4 trace replay integrity error.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .checker import (
    ALL_PROPERTIES,
    Property,
    ReplayError,
    Trace,
    Verdict,
    check_state,
    explore,
    fingerprint_hex,
    make_oracle,
    replay_states,
)
from .config import ConfigError, ScenarioConfig, load_config
from .netmodel import SystemState, routing_start
from .promela import export_promela
from .saodv import Data, RouteReply, RouteRequest

EXIT_HOLDS = 0
EXIT_VIOLATED = 1
EXIT_BOUND = 2
EXIT_CONFIG = 3
EXIT_REPLAY = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load(path: str, err: TextIO) -> Optional[ScenarioConfig]:
    try:
        return load_config(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror or exc}", file=err)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"{path}: {diag}", file=err)
    return None


def _props(text: str) -> list[Property]:
    try:
        return Property.parse_list(text)
    except KeyError as exc:
        raise argparse.ArgumentTypeError(f"unknown property {exc.args[0]}") from None


def render_report(config: ScenarioConfig, props: Sequence[Property], verdict: Verdict,
                  elapsed: float, keep_going: bool = False) -> str:
    topo = config.topology
    lines = [
        f"scenario: {topo.n} nodes, source {topo.source}, dest {topo.dest}, "
        f"mode {config.mode}, msl {config.msl}, rreq {config.rreq_policy}",
        f"verdict: {verdict.outcome}",
        f"states explored: {verdict.states_explored}",
        f"max depth: {verdict.max_depth_seen}",
        f"wall time: {elapsed:.3f} s",
    ]
    violated = {w.prop: w for w in verdict.witnesses}
    # a keep-going run that found something still explored the whole space
    complete = verdict.outcome == "holds" or (verdict.outcome == "violated" and keep_going)
    for prop in sorted(props, key=lambda p: p.name):
        if prop in violated:
            status = f"VIOLATED  {violated[prop].message}"
        elif complete:
            status = "holds"
        else:
            status = "not established (exploration stopped early)"
        lines.append(f"  {prop.name} {prop.value:<18} {status}")
    if verdict.outcome == "resource_exhausted" and verdict.message:
        lines.append(f"note: {verdict.message}")
    return "\n".join(lines) + "\n"


def cmd_verify(args, out: TextIO, err: TextIO) -> int:
    config = _load(args.config, err)
    if config is None:
        return EXIT_CONFIG
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.msl is not None:
        if args.msl not in range(5):
            print("error: --msl must be 0..4", file=err)
            return EXIT_CONFIG
        changes["msl"] = args.msl
    if changes:
        config = config.replace(**changes)
    if args.max_depth is not None and args.max_depth < 1:
        print("error: --max-depth must be >= 1", file=err)
        return EXIT_CONFIG

    started = time.perf_counter()
    verdict = explore(config, args.props, args.max_depth, keep_going=args.keep_going)
    elapsed = time.perf_counter() - started
    out.write(render_report(config, args.props, verdict, elapsed, args.keep_going))

    if verdict.outcome == "violated":
        base = Path(args.trace_out) if args.trace_out else Path(args.config).with_suffix(".trace")
        for k, w in enumerate(verdict.witnesses):
            path = base if k == 0 else base.with_name(f"{base.name}.{w.prop.name}")
            path.write_text(w.trace.to_text(), encoding="utf-8")
            out.write(f"trace for {w.prop.name} written to {path}\n")
        return EXIT_VIOLATED
    if verdict.outcome == "holds":
        return EXIT_HOLDS
    return EXIT_BOUND


def _describe_msg(msg) -> str:
    if isinstance(msg, RouteRequest):
        return f"RREQ(origin {msg.origin}, id {msg.request_id}, dest {msg.dest}, hops {msg.hop_count}, msl {msg.msl})"
    if isinstance(msg, RouteReply):
        return f"RREP(origin {msg.origin}, dest {msg.dest}, hops {msg.hop_count}, seq {msg.dest_seq})"
    if isinstance(msg, Data):
        return f"DATA(origin {msg.origin}, dest {msg.dest}, tag {msg.payload_tag})"
    return repr(msg)


def _route_delta(before: SystemState, after: SystemState) -> list[str]:
    notes = []
    for old, new in zip(before.nodes, after.nodes):
        for e in new.routes:
            prev = old.route(e.dest)
            if prev != e:
                verb = "new route" if prev is None else "route updated"
                notes.append(f"node {new.id}: {verb} to {e.dest} via {e.next_hop}, "
                             f"{e.hop_count} hops, seq {e.dest_seq}, next-hop rank {int(e.next_hop_rank)}")
    return notes


def narrate(config: ScenarioConfig, states: list[SystemState], trace: Trace) -> str:
    topo = config.topology
    lines = ["post-discovery neighbor ranks:"]
    for node in states[0].nodes:
        recs = ", ".join(f"{r.neighbor}: rank {int(r.rank)} (d' {float(r.d_prime) / 1000:g} m)"
                         for r in node.neighbors)
        lines.append(f"  node {node.id}: {recs or 'no neighbors'}")
    for step, before, after in zip(trace.steps, states, states[1:]):
        if step.action.kind == "originate":
            src = topo.source
            lines.append(f"step {step.index}: node {src} originates a route request for {topo.dest}")
        else:
            msg = before.channel(step.action.frm, step.action.to).queue[0]
            rank = after.nodes[step.action.to].rank_of(step.action.frm)
            lines.append(f"step {step.index}: node {step.action.to} receives {_describe_msg(msg)} "
                         f"from {step.action.frm} (rank {int(rank)})")
        lines += [f"    {note}" for note in _route_delta(before, after)]
    final = states[-1]
    props = [trace.prop] if trace.prop is not None else list(ALL_PROPERTIES)
    violations = check_state(final, props, config, make_oracle(config, states[0]))
    if violations:
        for prop, msg in violations:
            lines.append(f"{prop.name} violated: {msg}")
    else:
        checked = ", ".join(p.name for p in props)
        lines.append(f"final state {fingerprint_hex(final)} satisfies {checked}")
    return "\n".join(lines) + "\n"


def cmd_replay(args, out: TextIO, err: TextIO) -> int:
    config = _load(args.config, err)
    if config is None:
        return EXIT_CONFIG
    try:
        text = Path(args.trace).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.trace}: {exc.strerror or exc}", file=err)
        return EXIT_CONFIG
    try:
        trace = Trace.from_text(text)
        states = replay_states(config, trace)
    except (ReplayError, KeyError, ValueError) as exc:
        print(f"replay error: {exc}", file=err)
        return EXIT_REPLAY
    config = config.replace(mode=trace.mode or config.mode,
                            msl=config.msl if trace.msl is None else trace.msl)
    out.write(narrate(config, states, trace))
    return EXIT_HOLDS


def cmd_export(args, out: TextIO, err: TextIO) -> int:
    config = _load(args.config, err)
    if config is None:
        return EXIT_CONFIG
    text = export_promela(config, Path(args.config).stem)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return EXIT_HOLDS


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saodvcheck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="exhaustively check properties of a scenario")
    v.add_argument("config")
    v.add_argument("--props", type=_props, default=list(ALL_PROPERTIES),
                   help="comma-separated list from P1..P7, or 'all' (default)")
    v.add_argument("--max-depth", type=int, default=None)
    v.add_argument("--keep-going", action="store_true",
                   help="collect one witness per property instead of stopping at the first")
    v.add_argument("--trace-out", default=None)
    v.add_argument("--mode", choices=("sa", "plain"), default=None,
                   help="override the scenario's mode")
    v.add_argument("--msl", type=int, default=None, help="override the scenario's msl")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("replay", help="re-run a trace and narrate it")
    r.add_argument("config")
    r.add_argument("trace")
    r.set_defaults(func=cmd_replay)

    e = sub.add_parser("export-promela", help="emit a PROMELA skeleton of the scenario")
    e.add_argument("config")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: TextIO = None, err: TextIO = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    return args.func(args, out, err)


if __name__ == "__main__":
    sys.exit(main())
