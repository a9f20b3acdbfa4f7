"""Breadth-first explicit-state exploration with a fixed property catalogue."""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .config import ScenarioConfig
from .netmodel import (
    CAPACITY,
    Action,
    ModelError,
    SystemState,
    Topology,
    apply_action,
    raw_successors,
    routing_start,
    settle,
)
from .rnd import Rank
from .saodv import RouteReply, RouteRequest


class ReplayError(RuntimeError):
    """A trace does not replay against the given scenario."""


class Property(Enum):
    P1 = "LoopFreedom"
    P2 = "RouteOptimality"
    P3 = "HopBound"
    P4 = "TrustedHops"
    P5 = "WormholeExclusion"
    P6 = "ChannelCapacity"
    P7 = "RouteCompleteness"

    @property
    def quiescent_only(self) -> bool:
        return self in (Property.P2, Property.P7)

    @classmethod
    def parse_list(cls, text: str) -> list[Property]:
        if text.strip().lower() == "all":
            return list(cls)
        out = []
        for part in text.split(","):
            part = part.strip().upper()
            if part:
                out.append(cls[part])
        return out


ALL_PROPERTIES = tuple(Property)


def serialize(state: SystemState) -> bytes:
    """Canonical byte form of a state; equal iff the logical states are equal."""
    return state.encoded


def fingerprint(state: SystemState) -> tuple[int, bytes]:
    data = serialize(state)
    digest = int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")
    return digest, data


def fingerprint_hex(state: SystemState) -> str:
    return f"{fingerprint(state)[0]:016x}"


class StateStore:
    """Visited set keyed on the 64-bit digest, confirmed on full serialization."""

    def __init__(self) -> None:
        self._buckets: dict[int, list[bytes]] = {}
        self.collisions = 0

    def add(self, digest: int, data: bytes) -> bool:
        """Insert; False if the state was already present."""
        bucket = self._buckets.get(digest)
        if bucket is None:
            self._buckets[digest] = [data]
            return True
        if data in bucket:
            return False
        self.collisions += 1
        bucket.append(data)
        return True

    def __len__(self) -> int:
        return sum(len(b) for b in self._buckets.values())


def rank_table(state: SystemState) -> dict[tuple[int, int], Rank]:
    """``(owner, neighbor) -> rank`` as recorded by discovery."""
    return {(node.id, r.neighbor): r.rank for node in state.nodes for r in node.neighbors}


def admissible_links(
    topo: Topology, ranks: dict[tuple[int, int], Rank], msl: int, mode: str
) -> set[frozenset[int]]:
    links = set()
    for i, j in topo.channel_pairs():
        if i > j:
            continue
        a, b = ranks.get((i, j)), ranks.get((j, i))
        if a is None or b is None:
            continue
        if mode == "sa" and (a < msl or b < msl):
            continue
        links.add(frozenset((i, j)))
    return links


def bfs_shortest_trusted(
    topo: Topology, ranks: dict[tuple[int, int], Rank], msl: int, mode: str
) -> Optional[int]:
    """Fewest hops from source to dest over links both ends may use."""
    links = admissible_links(topo, ranks, msl, mode)
    adj: dict[int, list[int]] = {v: [] for v in range(topo.n)}
    for link in links:
        i, j = sorted(link)
        adj[i].append(j)
        adj[j].append(i)
    dist = {topo.source: 0}
    queue = deque([topo.source])
    while queue:
        v = queue.popleft()
        if v == topo.dest:
            return dist[v]
        for w in sorted(adj[v]):
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return None


@dataclass(frozen=True)
class Oracle:
    shortest: Optional[int]


def make_oracle(config: ScenarioConfig, start: SystemState) -> Oracle:
    return Oracle(bfs_shortest_trusted(config.topology, rank_table(start), config.msl, config.mode))


def _next_hop_cycle(state: SystemState, dest: int) -> Optional[list[int]]:
    nxt = {}
    for node in state.nodes:
        e = node.route(dest)
        if e is not None:
            nxt[node.id] = e.next_hop
    for start in sorted(nxt):
        path, seen = [start], {start}
        v = start
        while v in nxt:
            v = nxt[v]
            if v in seen:
                return path[path.index(v):] + [v]
            seen.add(v)
            path.append(v)
    return None


def eval_property(
    state: SystemState, prop: Property, config: ScenarioConfig, oracle: Oracle
) -> Optional[str]:
    """None if ``prop`` holds in ``state``, else a description of the violation."""
    topo = config.topology
    if prop.quiescent_only and state.phase != "quiescent":
        raise ModelError(f"{prop.name} is only defined on quiescent states")

    if prop is Property.P1:
        dests = sorted({e.dest for node in state.nodes for e in node.routes})
        for d in dests:
            cycle = _next_hop_cycle(state, d)
            if cycle:
                return f"routing loop toward {d}: " + "->".join(map(str, cycle))
        return None

    if prop is Property.P2:
        entry = state.nodes[topo.source].route(topo.dest)
        if entry is None or oracle.shortest is None or entry.hop_count == oracle.shortest:
            return None
        return (f"source {topo.source} holds a {entry.hop_count}-hop route to {topo.dest}; "
                f"shortest admissible path has {oracle.shortest} hops")

    if prop is Property.P3:
        bound = topo.n - 1
        for node in state.nodes:
            for e in node.routes:
                if e.hop_count > bound:
                    return f"node {node.id} route to {e.dest} has {e.hop_count} hops > {bound}"
        for c, m in state.in_flight():
            if isinstance(m, (RouteRequest, RouteReply)) and m.hop_count > bound:
                return f"message on {c.frm}->{c.to} carries hop_count {m.hop_count} > {bound}"
        return None

    if prop is Property.P4:
        if config.mode != "sa":
            return None
        for node in state.nodes:
            for e in node.routes:
                if e.next_hop_rank < config.msl:
                    return (f"node {node.id} routes to {e.dest} via {e.next_hop} "
                            f"with rank {int(e.next_hop_rank)} < msl {config.msl}")
        return None

    if prop is Property.P5:
        w = topo.wormhole
        if w is None:
            return None
        for node in state.nodes:
            for e in node.routes:
                if {node.id, e.next_hop} == {w.end_a, w.end_b}:
                    return f"route {node.id}→{e.dest} via tunnel endpoint {e.next_hop}"
        return None

    if prop is Property.P6:
        for c in state.channels:
            if len(c.queue) > CAPACITY:
                return f"channel {c.frm}->{c.to} holds {len(c.queue)} messages > {CAPACITY}"
        return None

    if prop is Property.P7:
        if oracle.shortest is not None and state.nodes[topo.source].route(topo.dest) is None:
            return (f"quiescent with no route from {topo.source} to {topo.dest} although an "
                    f"admissible {oracle.shortest}-hop path exists")
        return None

    raise ValueError(prop)


def check_state(
    state: SystemState, props: Iterable[Property], config: ScenarioConfig, oracle: Oracle
) -> list[tuple[Property, str]]:
    out = []
    quiescent = state.phase == "quiescent"
    for prop in props:
        if prop.quiescent_only and not quiescent:
            continue
        msg = eval_property(state, prop, config, oracle)
        if msg is not None:
            out.append((prop, msg))
    return out


@dataclass(frozen=True)
class TraceStep:
    index: int
    action: Action
    fingerprint: str


@dataclass(frozen=True)
class Trace:
    """Action sequence from the post-discovery state.

    Text form is one ``<index> <action> <fingerprint-hex>`` line per step.
    Optional ``#`` header lines record the initial fingerprint, the violated
    property and the mode/msl the run used (command-line overrides included).
    """

    steps: tuple[TraceStep, ...]
    initial: Optional[str] = None
    prop: Optional[Property] = None
    mode: Optional[str] = None
    msl: Optional[int] = None

    def to_text(self) -> str:
        lines = []
        if self.initial is not None:
            lines.append(f"# initial {self.initial}")
        if self.prop is not None:
            lines.append(f"# property {self.prop.name}")
        if self.mode is not None:
            lines.append(f"# mode {self.mode}")
        if self.msl is not None:
            lines.append(f"# msl {self.msl}")
        lines += [f"{s.index} {s.action} {s.fingerprint}" for s in self.steps]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Trace:
        steps, initial, prop, mode, msl = [], None, None, None, None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                words = line[1:].split()
                if len(words) == 2 and words[0] == "initial":
                    initial = words[1]
                elif len(words) == 2 and words[0] == "property":
                    prop = Property[words[1]]
                elif len(words) == 2 and words[0] == "mode":
                    mode = words[1]
                elif len(words) == 2 and words[0] == "msl":
                    msl = int(words[1])
                continue
            parts = line.split()
            try:
                index = int(parts[0])
                action = Action.parse(" ".join(parts[1:-1]))
                fp = parts[-1]
                int(fp, 16)
            except (ValueError, IndexError) as exc:
                raise ReplayError(f"trace line {lineno} is malformed: {raw!r}") from exc
            steps.append(TraceStep(index, action, fp))
        return cls(tuple(steps), initial, prop, mode, msl)


@dataclass(frozen=True)
class Witness:
    prop: Property
    message: str
    trace: Trace


@dataclass(frozen=True)
class Verdict:
    outcome: str  # holds | violated | bound_reached | resource_exhausted
    violated_property: Optional[Property] = None
    trace: Optional[Trace] = None
    states_explored: int = 0
    max_depth_seen: int = 0
    message: Optional[str] = None
    witnesses: tuple[Witness, ...] = field(default=())

    def to_text(self) -> str:
        """Deterministic rendering used to compare runs byte for byte."""
        lines = [
            f"outcome {self.outcome}",
            f"states_explored {self.states_explored}",
            f"max_depth_seen {self.max_depth_seen}",
        ]
        for w in self.witnesses:
            lines.append(f"violated {w.prop.name} {w.message}")
            lines.append(w.trace.to_text().rstrip("\n"))
        return "\n".join(lines) + "\n"


def _build_trace(
    parents: dict[bytes, tuple[Optional[bytes], Optional[Action], str]],
    leaf: bytes,
    prop: Property,
    config: ScenarioConfig,
) -> Trace:
    chain = []
    key: Optional[bytes] = leaf
    while key is not None:
        parent, action, fp = parents[key]
        chain.append((action, fp))
        key = parent
    chain.reverse()
    initial = chain[0][1]
    steps = tuple(TraceStep(k, a, fp) for k, (a, fp) in enumerate(chain[1:], start=1))
    return Trace(steps, initial, prop, config.mode, config.msl)


def explore(
    config: ScenarioConfig,
    props: Iterable[Property] = ALL_PROPERTIES,
    max_depth: Optional[int] = None,
    *,
    keep_going: bool = False,
    dedup: bool = True,
    max_states: Optional[int] = None,
) -> Verdict:
    """Exhaustive BFS from the post-discovery state.

    Stops at the first violation unless ``keep_going``, in which case one
    (shortest) witness is kept per property. ``max_depth=None`` uses the
    scenario's own bound.
    """
    props = sorted(set(props), key=lambda p: p.name)
    if config.overflow_assert and Property.P6 not in props:
        props = sorted(props + [Property.P6], key=lambda p: p.name)
    depth_bound = config.max_depth if max_depth is None else max_depth
    if depth_bound < 1:
        raise ValueError("max_depth must be >= 1")

    try:
        return _bfs(config, props, depth_bound, keep_going, dedup, max_states)
    except MemoryError:
        return Verdict("resource_exhausted", message="out of memory during exploration")


def _bfs(config, props, depth_bound, keep_going, dedup, max_states) -> Verdict:
    start = routing_start(config)
    oracle = make_oracle(config, start)
    store = StateStore()
    parents: dict[bytes, tuple[Optional[bytes], Optional[Action], str]] = {}

    digest, data = fingerprint(start)
    store.add(digest, data)
    parents[data] = (None, None, f"{digest:016x}")
    frontier = deque([(start, data, 0)])
    explored = 0
    max_depth_seen = 0
    truncated = False
    witnesses: dict[Property, Witness] = {}
    serial = 0  # distinguishes tree nodes when dedup is off

    while frontier:
        state, data, depth = frontier.popleft()
        succ = raw_successors(state, config)
        state = settle(state, config, succ)
        explored += 1
        max_depth_seen = max(max_depth_seen, depth)
        for prop, msg in check_state(state, props, config, oracle):
            if prop in witnesses:
                continue
            witnesses[prop] = Witness(prop, msg, _build_trace(parents, data, prop, config))
            if not keep_going:
                return _verdict(witnesses, explored, max_depth_seen, truncated)
        if max_states is not None and explored >= max_states and frontier:
            return Verdict("resource_exhausted", states_explored=explored,
                           max_depth_seen=max_depth_seen,
                           message=f"state limit {max_states} reached")
        if depth >= depth_bound:
            truncated = truncated or bool(succ)
            continue
        for action, nxt in succ:
            digest, nxt_data = fingerprint(nxt)
            if dedup:
                if not store.add(digest, nxt_data):
                    continue
                key = nxt_data
            else:
                serial += 1
                key = nxt_data + b"#" + str(serial).encode()
            parents[key] = (data, action, f"{digest:016x}")
            frontier.append((nxt, key, depth + 1))

    return _verdict(witnesses, explored, max_depth_seen, truncated)


def _verdict(witnesses, explored, max_depth_seen, truncated) -> Verdict:
    if witnesses:
        ordered = tuple(witnesses.values())
        first = ordered[0]
        return Verdict("violated", first.prop, first.trace, explored, max_depth_seen,
                       first.message, ordered)
    outcome = "bound_reached" if truncated else "holds"
    return Verdict(outcome, states_explored=explored, max_depth_seen=max_depth_seen)


def replay_states(config: ScenarioConfig, trace: Trace) -> list[SystemState]:
    """All states along a trace, starting with the post-discovery state."""
    changes = {}
    if trace.mode is not None:
        changes["mode"] = trace.mode
    if trace.msl is not None:
        changes["msl"] = trace.msl
    if changes:
        try:
            config = config.replace(**changes)
        except ValueError as exc:
            raise ReplayError(f"trace header: {exc}") from exc
    state = routing_start(config)
    if trace.initial is not None and fingerprint_hex(state) != trace.initial:
        raise ReplayError("initial state fingerprint does not match this scenario")
    states = [state]
    for step in trace.steps:
        try:
            state = apply_action(state, step.action, config)
        except ModelError as exc:
            raise ReplayError(f"step {step.index}: {exc}") from exc
        fp = fingerprint_hex(state)
        if fp != step.fingerprint:
            raise ReplayError(
                f"step {step.index}: fingerprint {fp} does not match recorded {step.fingerprint}")
        states.append(state)
    return states


def replay(config: ScenarioConfig, trace: Trace) -> SystemState:
    return replay_states(config, trace)[-1]
