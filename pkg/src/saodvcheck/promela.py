"""PROMELA skeleton export for cross-checking a scenario with SPIN by hand.

The output is byte-stable for a given scenario: no timestamps, no host data,
everything iterated in sorted order.
"""
from __future__ import annotations

from .config import ScenarioConfig
from .netmodel import CAPACITY, routing_start
from .checker import rank_table

NONE = 255


def _chan(i: int, j: int) -> str:
    return f"ch_{i}_{j}"


def export_promela(config: ScenarioConfig, name: str = "scenario") -> str:
    topo = config.topology
    ranks = rank_table(routing_start(config))
    pairs = topo.channel_pairs()
    out: list[str] = []
    w = out.append

    w(f"/* SA-AODV skeleton for {name}: {topo.n} nodes, source {topo.source}, dest {topo.dest} */")
    w(f"/* mode {config.mode}, msl {config.msl}, rreq policy {config.rreq_policy}; "
      f"ranks come from neighbor discovery */")
    w("")
    w(f"#define N      {topo.n}")
    w(f"#define SOURCE {topo.source}")
    w(f"#define DEST   {topo.dest}")
    w(f"#define MSL    {config.msl}")
    w(f"#define CAP    {CAPACITY}")
    w(f"#define NONE   {NONE}")
    w(f"#define SA_MODE {1 if config.mode == 'sa' else 0}")
    w("")
    w("mtype = { RREQ, RREP };")
    w("")
    w("/* rank node i holds for neighbor j; absent pairs were never discovered */")
    for i, j in pairs:
        if (j, i) in ranks:
            w(f"#define RANK_{j}_{i} {int(ranks[(j, i)])}")
    w("")
    w("/* connectivity matrix, row-major: 0 none, 1 radio link, 2 wormhole tunnel */")
    w("byte conn[N*N];")
    w("")
    w("/* fields: type, origin, request id or dest seq, hop count */")
    for i, j in pairs:
        w(f"chan {_chan(i, j)} = [CAP] of {{ mtype, byte, byte, byte }};")
    w("")
    w("byte seen[N];        /* best hop count seen for the request, NONE if unseen */")
    w("byte rev_hop[N];     /* reverse-path next hop toward SOURCE */")
    w("byte fwd_hop[N];     /* next hop toward DEST */")
    w("byte fwd_hops[N];    /* hop count of the route toward DEST */")
    w("byte fwd_seq[N];     /* destination sequence number of that route */")
    w("byte dest_seq;")
    w("")
    w("#define eligible(r) (!SA_MODE || (r) >= MSL)")
    w("")
    for v in range(topo.n):
        _proctype(w, config, v, pairs, ranks)
    w("init {")
    w("    byte k;")
    w("    d_step {")
    for i in range(topo.n):
        for j in range(topo.n):
            kind = 2 if topo.is_tunnel(i, j) else (1 if topo.dist[i][j] > 0 else 0)
            if kind:
                w(f"        conn[{i}*N+{j}] = {kind};")
    w("        for (k : 0 .. N-1) { seen[k] = NONE; rev_hop[k] = NONE; fwd_hop[k] = NONE; "
      "fwd_hops[k] = NONE }")
    w("    }")
    w("    atomic {")
    for v in range(topo.n):
        w(f"        run node_{v}();")
    w("    }")
    w("}")
    w("")
    _claims(w, topo.n)
    return "\n".join(out) + "\n"


def _proctype(w, config: ScenarioConfig, v: int, pairs, ranks) -> None:
    topo = config.topology
    inbound = [i for i, j in pairs if j == v]
    outbound = [j for i, j in pairs if i == v and (v, j) in ranks]
    w(f"proctype node_{v}() {{")
    w("    mtype t; byte o, s, h;")
    if v == topo.source:
        w("    atomic {")
        w("        seen[SOURCE] = 0;")
        for j in outbound:
            w(f"        if :: eligible(RANK_{v}_{j}) -> {_chan(v, j)}!RREQ, SOURCE, 0, 0 "
              f":: else -> skip fi;")
        w("    }")
    w("    do")
    for i in inbound:
        if (v, i) not in ranks:
            continue
        w(f"    :: {_chan(i, v)}?t, o, s, h ->")
        w("        assert(h <= N - 1);")
        w("        if")
        fresh = f"seen[{v}] == NONE" if config.rreq_policy == "first" else f"h + 1 < seen[{v}]"
        w(f"        :: t == RREQ && eligible(RANK_{v}_{i}) && o != {v} && {fresh} ->")
        w("            atomic {")
        w(f"                seen[{v}] = h + 1;")
        if v == topo.dest:
            w("                dest_seq++;")
            w(f"                {_chan(v, i)}!RREP, o, dest_seq, 0")
        else:
            w(f"                rev_hop[{v}] = {i};")
            for j in outbound:
                if j == i:
                    continue
                w(f"                if :: eligible(RANK_{v}_{j}) -> {_chan(v, j)}!RREQ, o, 0, h + 1 "
                  f":: else -> skip fi;")
            w("                skip")
        w("            }")
        w("        :: t == RREP ->")
        w("            atomic {")
        w("                if")
        w(f"                :: fwd_hop[{v}] == NONE || s > fwd_seq[{v}] || "
          f"(s == fwd_seq[{v}] && h + 1 < fwd_hops[{v}]) ->")
        w(f"                    fwd_hop[{v}] = {i}; fwd_hops[{v}] = h + 1; fwd_seq[{v}] = s")
        w("                :: else -> skip")
        w("                fi;")
        if v != topo.source:
            w("                if")
            for j in outbound:
                w(f"                :: rev_hop[{v}] == {j} -> {_chan(v, j)}!RREP, o, s, h + 1")
            w("                :: else -> skip")
            w("                fi")
        else:
            w("                skip")
        w("            }")
        w("        :: else -> skip")
        w("        fi")
    w("    od")
    w("}")
    w("")


def _claims(w, n: int) -> None:
    w("/* P3 hop bound, [] (fwd_hops[SOURCE] == NONE || fwd_hops[SOURCE] <= N - 1), as a never claim:")
    w("never {")
    w("T0_init:")
    w("    do")
    w("    :: (fwd_hops[SOURCE] != NONE && fwd_hops[SOURCE] > N - 1) -> goto accept_violation")
    w("    :: else -> goto T0_init")
    w("    od;")
    w("accept_violation:")
    w("    skip")
    w("}")
    w("*/")
    w("")
    cycles = " || ".join(
        f"(fwd_hop[{i}] == {j} && fwd_hop[{j}] == {i})"
        for i in range(n) for j in range(i + 1, n)
    )
    w("/* P1 loop freedom (two-node cycles shown; longer cycles follow the same pattern):")
    w("never {")
    w("T0_init:")
    w("    do")
    w(f"    :: ({cycles}) -> goto accept_violation")
    w("    :: else -> goto T0_init")
    w("    od;")
    w("accept_violation:")
    w("    skip")
    w("}")
    w("*/")
