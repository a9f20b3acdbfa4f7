"""Per-node SA-AODV routing with minimum-security-level filtering.

Every transition is a pure function from an immutable ``NodeState`` (plus the
incoming message) to a new ``NodeState`` and a list of ``(recipient, message)``
sends. Collections inside a node are kept as sorted tuples so that a node's
``key()`` is canonical without further sorting.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal, Optional, Union

from .rnd import NeighborRecord, Rank

Mode = Literal["sa", "plain"]
RreqPolicy = Literal["improve", "first"]

MSL_LEVELS = range(0, 5)


class ModelError(RuntimeError):
    """The harness drove a node in a way the model forbids."""


def check_msl(msl: int) -> int:
    if msl not in MSL_LEVELS:
        raise ValueError(f"minimum security level must be 0..4, got {msl!r}")
    return msl


@dataclass(frozen=True)
class Probe:
    sender: int
    t_s: int

    def key(self) -> tuple:
        return ("P", self.sender, self.t_s)


@dataclass(frozen=True)
class RouteRequest:
    origin: int
    request_id: int
    dest: int
    hop_count: int
    msl: int

    def key(self) -> tuple:
        return ("Q", self.origin, self.request_id, self.dest, self.hop_count, self.msl)


@dataclass(frozen=True)
class RouteReply:
    origin: int
    dest: int
    hop_count: int
    dest_seq: int

    def key(self) -> tuple:
        return ("R", self.origin, self.dest, self.hop_count, self.dest_seq)


@dataclass(frozen=True)
class Data:
    origin: int
    dest: int
    payload_tag: int

    def key(self) -> tuple:
        return ("D", self.origin, self.dest, self.payload_tag)


Message = Union[Probe, RouteRequest, RouteReply, Data]
Send = tuple[int, Message]


@dataclass(frozen=True)
class RouteEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    next_hop_rank: Rank

    def key(self) -> tuple:
        return (self.dest, self.next_hop, self.hop_count, self.dest_seq, int(self.next_hop_rank))


@dataclass(frozen=True)
class NodeState:
    id: int
    neighbors: tuple[NeighborRecord, ...] = ()
    routes: tuple[RouteEntry, ...] = ()
    seen_requests: tuple[tuple[int, int], ...] = ()
    # best hop count at which each (origin, request_id) arrived
    request_hops: tuple[tuple[int, int, int], ...] = ()
    own_seq: int = 0
    next_request_id: int = 0
    pending_request: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        # normalise so that construction order never leaks into the key
        object.__setattr__(self, "neighbors", tuple(sorted(self.neighbors, key=lambda r: r.neighbor)))
        object.__setattr__(self, "routes", tuple(sorted(self.routes, key=lambda e: e.dest)))
        object.__setattr__(self, "seen_requests", tuple(sorted(set(self.seen_requests))))
        object.__setattr__(self, "request_hops", tuple(sorted(self.request_hops)))

    @cached_property
    def _ranks(self) -> dict[int, Rank]:
        return {r.neighbor: r.rank for r in self.neighbors}

    @cached_property
    def _route_map(self) -> dict[int, RouteEntry]:
        return {e.dest: e for e in self.routes}

    def rank_of(self, neighbor: int) -> Optional[Rank]:
        return self._ranks.get(neighbor)

    def route(self, dest: int) -> Optional[RouteEntry]:
        return self._route_map.get(dest)

    def best_hops(self, origin: int, request_id: int) -> Optional[int]:
        for o, r, h in self.request_hops:
            if (o, r) == (origin, request_id):
                return h
        return None

    @cached_property
    def _key(self) -> tuple:
        return (
            self.id,
            tuple((r.neighbor, str(r.d_prime), int(r.rank)) for r in self.neighbors),
            tuple(e.key() for e in self.routes),
            self.seen_requests,
            self.request_hops,
            self.own_seq,
            self.next_request_id,
            self.pending_request,
        )

    def key(self) -> tuple:
        return self._key

    @cached_property
    def encoded(self) -> bytes:
        return repr(self._key).encode("ascii")

    def __hash__(self) -> int:
        return hash(self._key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NodeState):
            return NotImplemented
        return self._key == other._key

    def with_route(self, entry: RouteEntry) -> NodeState:
        others = tuple(e for e in self.routes if e.dest != entry.dest)
        return replace(self, routes=others + (entry,))

    def with_seen(self, origin: int, request_id: int, hops: int) -> NodeState:
        hop_rows = tuple(row for row in self.request_hops if row[:2] != (origin, request_id))
        return replace(
            self,
            seen_requests=self.seen_requests + ((origin, request_id),),
            request_hops=hop_rows + ((origin, request_id, hops),),
        )


def eligible_neighbors(node: NodeState, msl: int, mode: Mode) -> tuple[int, ...]:
    """Neighbors allowed to carry traffic, in ascending id order."""
    if mode == "plain":
        return tuple(r.neighbor for r in node.neighbors)
    return tuple(r.neighbor for r in node.neighbors if r.rank >= msl)


def _fresher(new_seq: int, new_hops: int, old: Optional[RouteEntry]) -> bool:
    if old is None:
        return True
    return new_seq > old.dest_seq or (new_seq == old.dest_seq and new_hops < old.hop_count)


def originate_request(
    node: NodeState, dest: int, msl: int, mode: Mode
) -> tuple[NodeState, list[Send]]:
    """Start a route discovery toward ``dest``; a no-op if a route exists."""
    check_msl(msl)
    if node.id == dest:
        raise ModelError("a node cannot request a route to itself")
    if node.route(dest) is not None:
        return node, []
    rid = node.next_request_id
    node = replace(
        node,
        own_seq=node.own_seq + 1,
        next_request_id=rid + 1,
        pending_request=(dest, rid),
    ).with_seen(node.id, rid, 0)
    msg = RouteRequest(origin=node.id, request_id=rid, dest=dest, hop_count=0, msl=msl)
    return node, [(nb, msg) for nb in eligible_neighbors(node, msl, mode)]


def handle_message(
    node: NodeState,
    msg: Message,
    sender: int,
    msl: int,
    mode: Mode,
    policy: RreqPolicy = "improve",
) -> tuple[NodeState, list[Send]]:
    """Consume one message delivered from ``sender``.

    ``msl`` is the scenario level; route requests carry their own level and
    forwarding nodes honour the carried value. ``policy="first"`` is textbook
    duplicate suppression (only the first copy of a request is processed);
    ``"improve"`` also processes a copy that arrived over strictly fewer hops.
    """
    if node.rank_of(sender) is None:
        raise ModelError(f"node {node.id} got a message from undiscovered node {sender}")
    if isinstance(msg, RouteRequest):
        return _on_request(node, msg, sender, mode, policy)
    if isinstance(msg, RouteReply):
        return _on_reply(node, msg, sender)
    if isinstance(msg, Data):
        if msg.dest == node.id:
            return node, []
        entry = node.route(msg.dest)
        if entry is None:
            return node, []
        return node, [(entry.next_hop, msg)]
    if isinstance(msg, Probe):
        raise ModelError("probes are consumed by the discovery phase, not by routing")
    raise TypeError(f"not a protocol message: {msg!r}")


def _on_request(
    node: NodeState, msg: RouteRequest, sender: int, mode: Mode, policy: RreqPolicy
) -> tuple[NodeState, list[Send]]:
    rank = node.rank_of(sender)
    if mode == "sa" and rank < msg.msl:
        return node, []
    if msg.origin == node.id:
        return node, []
    hops = msg.hop_count + 1
    best = node.best_hops(msg.origin, msg.request_id)
    if best is not None and (policy == "first" or hops >= best):
        return node, []
    node = node.with_seen(msg.origin, msg.request_id, hops)

    if node.id == msg.dest:
        node = replace(node, own_seq=node.own_seq + 1)
        reply = RouteReply(origin=msg.origin, dest=node.id, hop_count=0, dest_seq=node.own_seq)
        return node, [(sender, reply)]

    node = node.with_route(RouteEntry(msg.origin, sender, hops, 0, rank))
    fwd = replace(msg, hop_count=hops)
    targets = [nb for nb in eligible_neighbors(node, msg.msl, mode) if nb != sender]
    return node, [(nb, fwd) for nb in targets]


def _on_reply(node: NodeState, msg: RouteReply, sender: int) -> tuple[NodeState, list[Send]]:
    hops = msg.hop_count + 1
    if _fresher(msg.dest_seq, hops, node.route(msg.dest)):
        node = node.with_route(RouteEntry(msg.dest, sender, hops, msg.dest_seq, node.rank_of(sender)))
    if msg.origin == node.id:
        if node.pending_request is not None and node.pending_request[0] == msg.dest:
            node = replace(node, pending_request=None)
        return node, []
    back = node.route(msg.origin)
    if back is None:
        return node, []
    return node, [(back.next_hop, replace(msg, hop_count=hops))]
