"""Scenario files: parsing, validation with line-numbered diagnostics, rendering.

Format: one directive per line, ``#`` starts a comment. Distances are integer
millimeters and times integer picoseconds so all arithmetic stays exact::

    nodes 3
    range 100000
    t_pkt 1000000000
    link 0 1 20000
    link 1 2 20000
    source 0
    dest 2
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

from .netmodel import MAX_NODES, Topology, Wormhole
from .rnd import TimingParams

DEFAULT_VLIGHT = 299_792_458  # m/s
DEFAULT_MAX_DEPTH = 10**6

# unit conversion: mm per ps = (m/s) * 1000 / 1e12
_MM_PER_PS = Fraction(1, 10**9)


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    line: int
    code: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line else "file"
        return f"{where}: {self.code} {self.message}"


# diagnostic codes
SYNTAX = "E01-syntax"
UNKNOWN = "E02-unknown-directive"
DUPLICATE = "E03-duplicate"
ASYMMETRIC = "E04-asymmetric-link"
BAD_ID = "E05-node-id"
BAD_VALUE = "E06-value-range"
LINK_RANGE = "E07-link-exceeds-range"
WORMHOLE = "E08-wormhole"
MISSING = "E09-missing"
SAME_ENDPOINTS = "E10-source-is-dest"


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Topology
    params: TimingParams  # ps, mm, mm/ps
    msl: int = 1
    mode: str = "sa"
    skew_sign: str = "lower"
    overflow_assert: bool = False
    max_depth: int = DEFAULT_MAX_DEPTH
    rreq_policy: str = "improve"

    def __post_init__(self) -> None:
        if self.msl not in range(5):
            raise ValueError("msl must be 0..4")
        if self.mode not in ("sa", "plain"):
            raise ValueError("mode must be sa or plain")
        if self.skew_sign not in ("lower", "upper"):
            raise ValueError("skew_sign must be lower or upper")
        if self.rreq_policy not in ("improve", "first"):
            raise ValueError("rreq policy must be improve or first")
        for i, j in self.topology.genuine_links():
            if self.topology.dist[i][j] > self.params.range:
                raise ValueError(f"link {i}-{j} is longer than the transmission range")

    @classmethod
    def build(
        cls,
        topology: Topology,
        *,
        range_mm: int,
        t_pkt_ps: int,
        delta_t_ps: int = 0,
        t_mac_ps: int = 0,
        vlight: int = DEFAULT_VLIGHT,
        **options,
    ) -> ScenarioConfig:
        params = TimingParams(
            delta_t=delta_t_ps,
            t_mac=t_mac_ps,
            t_pkt=t_pkt_ps,
            v_light=vlight * _MM_PER_PS,
            range=range_mm,
        )
        return cls(topology, params, **options)

    @property
    def vlight(self) -> int:
        return int(self.params.v_light / _MM_PER_PS)

    @cached_property
    def channel_index(self) -> dict[tuple[int, int], int]:
        return {pair: k for k, pair in enumerate(self.topology.channel_pairs())}

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)


_SINGLE = {
    "nodes": 1, "range": 1, "vlight": 1, "delta_t": 1, "t_pkt": 1, "t_mac": 1,
    "msl": 1, "mode": 1, "skew_sign": 1, "source": 1, "dest": 1,
    "overflow_assert": 1, "max_depth": 1, "rreq": 1,
}
_MULTI = {"link": 3, "wormhole": 3}


@dataclass
class _Draft:
    values: dict[str, tuple[int, str]] = field(default_factory=dict)  # name -> (line, raw)
    links: dict[frozenset, tuple[int, int, int, int]] = field(default_factory=dict)
    wormhole: Optional[tuple[int, int, int, int]] = None  # line, a, b, tunnel
    diags: list[Diagnostic] = field(default_factory=list)

    def err(self, line: int, code: str, msg: str) -> None:
        self.diags.append(Diagnostic(line, code, msg))


def _int(draft: _Draft, line: int, raw: str, what: str) -> Optional[int]:
    try:
        return int(raw)
    except ValueError:
        draft.err(line, SYNTAX, f"{what} must be an integer, got {raw!r}")
        return None


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario; raise ``ConfigError`` with every diagnostic found."""
    d = _Draft()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        if word in _SINGLE:
            if len(args) != 1:
                d.err(lineno, SYNTAX, f"{word} takes exactly one argument")
                continue
            if word in d.values:
                d.err(lineno, DUPLICATE, f"{word} already set on line {d.values[word][0]}")
                continue
            d.values[word] = (lineno, args[0])
        elif word in _MULTI:
            if len(args) != 3:
                d.err(lineno, SYNTAX, f"{word} takes three arguments: <i> <j> <mm>")
                continue
            nums = [_int(d, lineno, a, f"{word} argument") for a in args]
            if None in nums:
                continue
            i, j, mm = nums
            if word == "link":
                _add_link(d, lineno, i, j, mm)
            elif d.wormhole is not None:
                d.err(lineno, DUPLICATE, f"wormhole already declared on line {d.wormhole[0]}")
            else:
                d.wormhole = (lineno, i, j, mm)
        else:
            d.err(lineno, UNKNOWN, f"unknown directive {word!r}")
    config = _assemble(d)
    if d.diags:
        raise ConfigError(d.diags)
    return config


def _add_link(d: _Draft, lineno: int, i: int, j: int, mm: int) -> None:
    if i == j:
        d.err(lineno, BAD_ID, f"link {i} {j} connects a node to itself")
        return
    if mm <= 0:
        d.err(lineno, BAD_VALUE, f"link distance must be > 0 mm, got {mm}")
        return
    key = frozenset((i, j))
    prev = d.links.get(key)
    if prev is None:
        d.links[key] = (lineno, i, j, mm)
    elif prev[3] != mm:
        d.err(lineno, ASYMMETRIC,
              f"link {i} {j} is {mm} mm but line {prev[0]} declared {prev[3]} mm")
    else:
        d.err(lineno, DUPLICATE, f"link {i} {j} already declared on line {prev[0]}")


def _get_int(d: _Draft, name: str, default=None, lo=None, hi=None, required=False):
    if name not in d.values:
        if required:
            d.err(0, MISSING, f"required directive {name!r} is missing")
        return default
    line, raw = d.values[name]
    value = _int(d, line, raw, name)
    if value is None:
        return default
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        bounds = f"{lo}..{hi}" if hi is not None else f">= {lo}"
        d.err(line, BAD_VALUE, f"{name} must be {bounds}, got {value}")
        return default
    return value


def _get_choice(d: _Draft, name: str, choices: dict[str, object], default):
    if name not in d.values:
        return default
    line, raw = d.values[name]
    if raw not in choices:
        d.err(line, BAD_VALUE, f"{name} must be one of {'|'.join(choices)}, got {raw!r}")
        return default
    return choices[raw]


def _assemble(d: _Draft) -> Optional[ScenarioConfig]:
    n = _get_int(d, "nodes", lo=2, hi=MAX_NODES, required=True)
    range_mm = _get_int(d, "range", lo=1, required=True)
    vlight = _get_int(d, "vlight", DEFAULT_VLIGHT, lo=1)
    delta_t = _get_int(d, "delta_t", 0, lo=0)
    t_pkt = _get_int(d, "t_pkt", lo=1, required=True)
    t_mac = _get_int(d, "t_mac", 0, lo=0)
    msl = _get_int(d, "msl", 1, lo=0, hi=4)
    max_depth = _get_int(d, "max_depth", DEFAULT_MAX_DEPTH, lo=1)
    mode = _get_choice(d, "mode", {"sa": "sa", "plain": "plain"}, "sa")
    # "paper" is the file-format keyword for the subtracting form; "lower" is its synonym
    skew = _get_choice(d, "skew_sign", {"paper": "lower", "lower": "lower", "upper": "upper"}, "lower")
    overflow = _get_choice(d, "overflow_assert", {"on": True, "off": False}, False)
    policy = _get_choice(d, "rreq", {"improve": "improve", "first": "first"}, "improve")

    def node_id(name: str) -> Optional[int]:
        v = _get_int(d, name, required=True)
        if v is not None and n is not None and not 0 <= v < n:
            d.err(d.values[name][0], BAD_ID, f"{name} {v} is not a node id below {n}")
            return None
        return v

    source, dest = node_id("source"), node_id("dest")
    if source is not None and source == dest:
        d.err(d.values["dest"][0], SAME_ENDPOINTS, "source and dest must differ")

    links = {}
    for line, i, j, mm in d.links.values():
        ok = True
        for v in (i, j):
            if n is not None and not 0 <= v < n:
                d.err(line, BAD_ID, f"link endpoint {v} is not a node id below {n}")
                ok = False
        if range_mm is not None and mm > range_mm:
            d.err(line, LINK_RANGE, f"link {i} {j} is {mm} mm, beyond range {range_mm} mm")
            ok = False
        if ok:
            links[(i, j)] = mm

    wormhole = None
    if d.wormhole is not None:
        line, a, b, mm = d.wormhole
        ok = True
        for v in (a, b):
            if n is not None and not 0 <= v < n:
                d.err(line, BAD_ID, f"wormhole endpoint {v} is not a node id below {n}")
                ok = False
        if a == b:
            d.err(line, WORMHOLE, "wormhole endpoints must be distinct")
            ok = False
        if frozenset((a, b)) in d.links:
            d.err(line, WORMHOLE, f"wormhole endpoints {a} and {b} already share a genuine link")
            ok = False
        if mm <= 0:
            d.err(line, BAD_VALUE, "tunnel distance must be > 0 mm")
            ok = False
        if ok:
            wormhole = Wormhole(a, b, mm)

    if d.diags:
        return None
    topo = Topology.from_links(n, links, source, dest, wormhole)
    return ScenarioConfig.build(
        topo,
        range_mm=range_mm,
        t_pkt_ps=t_pkt,
        delta_t_ps=delta_t,
        t_mac_ps=t_mac,
        vlight=vlight,
        msl=msl,
        mode=mode,
        skew_sign=skew,
        overflow_assert=overflow,
        max_depth=max_depth,
        rreq_policy=policy,
    )


def render_config(config: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config(render_config(c)) == c``."""
    topo, p = config.topology, config.params
    lines = [
        f"nodes {topo.n}",
        f"range {p.range}",
        f"vlight {config.vlight}",
        f"delta_t {p.delta_t}",
        f"t_pkt {p.t_pkt}",
        f"t_mac {p.t_mac}",
        f"msl {config.msl}",
        f"mode {config.mode}",
        f"skew_sign {config.skew_sign}",
        f"rreq {config.rreq_policy}",
        f"overflow_assert {'on' if config.overflow_assert else 'off'}",
        f"max_depth {config.max_depth}",
    ]
    lines += [f"link {i} {j} {topo.dist[i][j]}" for i, j in topo.genuine_links()]
    if topo.wormhole is not None:
        w = topo.wormhole
        lines.append(f"wormhole {w.end_a} {w.end_b} {w.tunnel_dist}")
    lines += [f"source {topo.source}", f"dest {topo.dest}"]
    return "\n".join(lines) + "\n"


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
