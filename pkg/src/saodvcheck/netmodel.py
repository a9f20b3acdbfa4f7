"""World model: static topology, bounded FIFO channels, discovery, successors.

A ``SystemState`` is an immutable value. Discovery runs once, atomically, since
probe timing is a pure function of geometry; after that the only actions are
the source originating its route request and the delivery of the head message
of some non-empty channel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Iterator, Literal, Optional

from .rnd import ProbeTiming, TimingParams, process_probe
from .saodv import (
    Message,
    ModelError,
    NodeState,
    Probe,
    handle_message,
    originate_request,
)

if TYPE_CHECKING:
    from .config import ScenarioConfig

CAPACITY = 2
MAX_NODES = 8

Phase = Literal["discovery", "routing", "quiescent"]


@dataclass(frozen=True)
class Wormhole:
    end_a: int
    end_b: int
    tunnel_dist: int  # mm

    @property
    def pair(self) -> frozenset[int]:
        return frozenset((self.end_a, self.end_b))


@dataclass(frozen=True)
class Topology:
    """Node count, symmetric distance matrix in millimeters, flow endpoints.

    ``dist[i][j] > 0`` means a genuine radio link. The wormhole endpoints have
    no genuine link; the attacker makes them look adjacent.
    """

    n: int
    dist: tuple[tuple[int, ...], ...]
    source: int
    dest: int
    wormhole: Optional[Wormhole] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "dist", tuple(tuple(int(d) for d in row) for row in self.dist))
        if not 2 <= self.n <= MAX_NODES:
            raise ValueError(f"node count must be in 2..{MAX_NODES}, got {self.n}")
        if len(self.dist) != self.n or any(len(row) != self.n for row in self.dist):
            raise ValueError("distance matrix must be n x n")
        for i in range(self.n):
            if self.dist[i][i] != 0:
                raise ValueError(f"dist[{i}][{i}] must be 0")
            for j in range(self.n):
                if self.dist[i][j] != self.dist[j][i]:
                    raise ValueError(f"distance matrix not symmetric at ({i}, {j})")
                if self.dist[i][j] < 0:
                    raise ValueError(f"negative distance at ({i}, {j})")
        for v in (self.source, self.dest):
            if not 0 <= v < self.n:
                raise ValueError(f"node id {v} out of range")
        if self.source == self.dest:
            raise ValueError("source and dest must differ")
        w = self.wormhole
        if w is not None:
            if w.end_a == w.end_b:
                raise ValueError("wormhole endpoints must be distinct")
            if not (0 <= w.end_a < self.n and 0 <= w.end_b < self.n):
                raise ValueError("wormhole endpoint out of range")
            if self.dist[w.end_a][w.end_b] > 0:
                raise ValueError("wormhole endpoints already share a genuine link")
            if w.tunnel_dist <= 0:
                raise ValueError("tunnel distance must be > 0")

    @classmethod
    def from_links(
        cls,
        n: int,
        links: dict[tuple[int, int], int],
        source: int,
        dest: int,
        wormhole: Optional[Wormhole] = None,
    ) -> Topology:
        dist = [[0] * n for _ in range(n)]
        for (i, j), d in links.items():
            dist[i][j] = dist[j][i] = d
        return cls(n, tuple(map(tuple, dist)), source, dest, wormhole)

    def genuine_links(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n) if self.dist[i][j] > 0]

    def is_tunnel(self, i: int, j: int) -> bool:
        w = self.wormhole
        return w is not None and {i, j} == {w.end_a, w.end_b}

    def connected(self, i: int, j: int) -> bool:
        return i != j and (self.dist[i][j] > 0 or self.is_tunnel(i, j))

    def effective_dist(self, i: int, j: int) -> int:
        if i == j:
            return 0
        if self.is_tunnel(i, j):
            return self.wormhole.tunnel_dist
        if self.dist[i][j] > 0:
            return self.dist[i][j]
        raise ModelError(f"nodes {i} and {j} are not connected")

    def channel_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, j) for i in range(self.n) for j in range(self.n) if self.connected(i, j))


@dataclass(frozen=True)
class Channel:
    frm: int
    to: int
    queue: tuple[Message, ...] = ()


@dataclass(frozen=True)
class Action:
    kind: Literal["originate", "deliver"]
    frm: int = -1
    to: int = -1

    @classmethod
    def originate(cls) -> Action:
        return cls("originate")

    @classmethod
    def deliver(cls, frm: int, to: int) -> Action:
        return cls("deliver", frm, to)

    def sort_key(self) -> tuple:
        return (0,) if self.kind == "originate" else (1, self.frm, self.to)

    def __str__(self) -> str:
        return "originate" if self.kind == "originate" else f"deliver {self.frm} {self.to}"

    @classmethod
    def parse(cls, text: str) -> Action:
        parts = text.split()
        if parts == ["originate"]:
            return cls.originate()
        if len(parts) == 3 and parts[0] == "deliver":
            return cls.deliver(int(parts[1]), int(parts[2]))
        raise ValueError(f"not an action: {text!r}")


@dataclass(frozen=True)
class SystemState:
    nodes: tuple[NodeState, ...]
    channels: tuple[Channel, ...]
    phase: Phase = "discovery"
    origination_done: bool = False

    @cached_property
    def _key(self) -> tuple:
        # routing vs quiescent is a function of the rest of the state
        return (
            tuple(node.key() for node in self.nodes),
            tuple((c.frm, c.to, tuple(m.key() for m in c.queue)) for c in self.channels),
            self.phase == "discovery",
            self.origination_done,
        )

    def key(self) -> tuple:
        return self._key

    @cached_property
    def encoded(self) -> bytes:
        """Canonical bytes, assembled from the per-node cached encodings."""
        nodes, channels, discovery, done = self._key
        parts = [node.encoded for node in self.nodes]
        parts.append(repr((channels, discovery, done)).encode("ascii"))
        return b"\n".join(parts)

    def __hash__(self) -> int:
        return hash(self._key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SystemState):
            return NotImplemented
        return self._key == other._key

    def channel(self, frm: int, to: int) -> Channel:
        for c in self.channels:
            if c.frm == frm and c.to == to:
                return c
        raise ModelError(f"no channel {frm}->{to}")

    def in_flight(self) -> Iterator[tuple[Channel, Message]]:
        for c in self.channels:
            for m in c.queue:
                yield c, m

    def overflowed(self) -> bool:
        return any(len(c.queue) > CAPACITY for c in self.channels)


def initial_state(config: ScenarioConfig) -> SystemState:
    topo = config.topology
    return SystemState(
        nodes=tuple(NodeState(id=i) for i in range(topo.n)),
        channels=tuple(Channel(i, j) for i, j in topo.channel_pairs()),
        phase="discovery",
    )


def _round_half_up(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def probe_timing(i: int, j: int, topo: Topology, params: TimingParams) -> ProbeTiming:
    """Send/receive timestamps (ps) of ``i``'s probe as observed by ``j``.

    ``params.v_light`` is in millimeters per picosecond.
    """
    if not topo.connected(i, j) and i != j:
        raise ModelError(f"no link or tunnel between {i} and {j}")
    t_r = _round_half_up(Fraction(topo.effective_dist(i, j)) / Fraction(params.v_light))
    return ProbeTiming(t_s=0, t_r=t_r)


def run_discovery(state: SystemState, config: ScenarioConfig) -> SystemState:
    """Every node probes every connected peer; receivers keep accepted records."""
    if state.phase != "discovery":
        raise ModelError("discovery already ran")
    topo, params = config.topology, config.params
    nodes = []
    for node in state.nodes:
        j = node.id
        records = []
        for i in range(topo.n):
            if not topo.connected(i, j):
                continue
            probe = Probe(sender=i, t_s=0)
            timing = probe_timing(probe.sender, j, topo, params)
            rec = process_probe(timing, i, params, config.skew_sign)
            if rec is not None:
                records.append(rec)
        nodes.append(replace(node, neighbors=tuple(records)))
    return replace(state, nodes=tuple(nodes), phase="routing")


@lru_cache(maxsize=1 << 18)
def _handle(node: NodeState, msg: Message, sender: int, msl: int, mode: str, policy: str):
    return handle_message(node, msg, sender, msl, mode, policy)


def _enqueue(
    channels: list[Channel], index: dict[tuple[int, int], int], sender: int, sends, strict: bool
) -> bool:
    """Append sends to ``channels`` in place; False if a send would overflow and ``strict``."""
    for to, msg in sends:
        pos = index.get((sender, to))
        if pos is None:
            raise ModelError(f"node {sender} sent to {to} without a channel")
        c = channels[pos]
        if strict and len(c.queue) >= CAPACITY:
            return False
        channels[pos] = Channel(c.frm, c.to, c.queue + (msg,))
    return True


def _successor(state: SystemState, action: Action, config: ScenarioConfig) -> Optional[SystemState]:
    """Successor without the phase update, or None if the action is blocked/disabled."""
    strict = not config.overflow_assert
    if state.phase == "discovery" or (not strict and state.overflowed()):
        return None
    index = config.channel_index
    channels = list(state.channels)
    nodes = list(state.nodes)
    if action.kind == "originate":
        if state.origination_done:
            return None
        src = config.topology.source
        node, sends = originate_request(nodes[src], config.topology.dest, config.msl, config.mode)
        nodes[src] = node
        if not _enqueue(channels, index, src, sends, strict):
            return None
        return SystemState(tuple(nodes), tuple(channels), "routing", True)
    pos = index.get((action.frm, action.to))
    if pos is None:
        return None
    c = channels[pos]
    if not c.queue:
        return None
    msg = c.queue[0]
    channels[pos] = Channel(c.frm, c.to, c.queue[1:])
    node, sends = _handle(nodes[action.to], msg, action.frm, config.msl, config.mode, config.rreq_policy)
    nodes[action.to] = node
    if not _enqueue(channels, index, action.to, sends, strict):
        return None
    return SystemState(tuple(nodes), tuple(channels), "routing", state.origination_done)


def raw_successors(state: SystemState, config: ScenarioConfig) -> list[tuple[Action, SystemState]]:
    """Enabled actions with successors whose phase is not yet settled.

    Settling (marking a successor quiescent) costs a successor computation of
    its own; the checker defers it until the successor is expanded.
    """
    candidates = []
    if not state.origination_done:
        candidates.append(Action.originate())
    candidates.extend(Action.deliver(c.frm, c.to) for c in state.channels if c.queue)
    out = []
    for a in candidates:
        nxt = _successor(state, a, config)
        if nxt is not None:
            out.append((a, nxt))
    out.sort(key=lambda pair: pair[0].sort_key())
    return out


def settle(state: SystemState, config: ScenarioConfig, succ=None) -> SystemState:
    """Mark ``state`` quiescent if nothing is enabled (and no channel overflowed)."""
    if succ is None:
        succ = raw_successors(state, config)
    if not succ and state.phase == "routing" and not state.overflowed():
        return replace(state, phase="quiescent")
    return state


def successors(state: SystemState, config: ScenarioConfig) -> list[tuple[Action, SystemState]]:
    """All enabled actions paired with their (phase-settled) successor states."""
    return [(a, settle(s, config)) for a, s in raw_successors(state, config)]


def enabled_actions(state: SystemState, config: ScenarioConfig) -> list[Action]:
    if state.phase == "discovery":
        raise ModelError("routing actions are not enabled before discovery")
    return [a for a, _ in raw_successors(state, config)]


def apply_action(state: SystemState, action: Action, config: ScenarioConfig) -> SystemState:
    nxt = _successor(state, action, config)
    if nxt is None:
        raise ModelError(f"action {action} is not enabled")
    return settle(nxt, config)


def is_quiescent(state: SystemState, config: ScenarioConfig) -> bool:
    if state.phase == "discovery":
        return False
    return not raw_successors(state, config)


def routing_start(config: ScenarioConfig) -> SystemState:
    """The post-discovery state that exploration starts from."""
    return settle(run_discovery(initial_state(config), config), config)
