from __future__ import annotations

from pathlib import Path

import pytest

from saodvcheck.config import ScenarioConfig, load_config
from saodvcheck.netmodel import Topology

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"

RANGE_MM = 100_000
SKEW_PS = 100_000
T_PKT_PS = 1_000_000_000


def make_config(n, links, source=0, dest=None, wormhole=None, **options) -> ScenarioConfig:
    if isinstance(links, (list, tuple)):
        links = {e: 20_000 for e in links}
    topo = Topology.from_links(n, links, source, n - 1 if dest is None else dest, wormhole)
    options.setdefault("delta_t_ps", SKEW_PS)
    return ScenarioConfig.build(topo, range_mm=RANGE_MM, t_pkt_ps=T_PKT_PS, **options)


def scenario(name: str) -> ScenarioConfig:
    return load_config(SCENARIOS / f"{name}.cfg")


@pytest.fixture
def chain3() -> ScenarioConfig:
    return scenario("chain3")


@pytest.fixture
def wormhole() -> ScenarioConfig:
    return scenario("wormhole")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, folding parametrized cases together."""
    results: dict[str, list[bool]] = {}
    names: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_ac" not in nodeid:
                continue
            if rep.when != "call" and outcome == "passed":
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            key = name.split("_")[1]
            names[key] = name
            results.setdefault(key, []).append(outcome == "passed")
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[2:])):
        oks = results[key]
        status = "PASS" if all(oks) else "FAIL"
        terminalreporter.write_line(f"{status}  {key.upper()}  {names[key]}  ({sum(oks)}/{len(oks)} cases)")
