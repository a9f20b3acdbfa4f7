import io
import shutil
import subprocess
import sys

import pytest

from conftest import SCENARIOS
from saodvcheck.cli import EXIT_BOUND, EXIT_CONFIG, EXIT_HOLDS, EXIT_REPLAY, EXIT_VIOLATED, main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def work(tmp_path):
    for name in ("chain3", "wormhole", "triangle_first"):
        shutil.copy(SCENARIOS / f"{name}.cfg", tmp_path)
    return tmp_path


def test_verify_holds(work):
    code, out, _ = run("verify", str(work / "chain3.cfg"), "--props", "P1,P2,P3")
    assert code == EXIT_HOLDS
    assert "verdict: holds" in out and "states explored: 6" in out
    assert "  P1 " in out and "P4" not in out
    assert not (work / "chain3.trace").exists()


def test_verify_wormhole_plain_writes_trace(work):
    code, out, _ = run("verify", str(work / "wormhole.cfg"), "--mode", "plain", "--props", "P5")
    assert code == EXIT_VIOLATED
    assert "VIOLATED  route 0→2 via tunnel endpoint 2" in out
    trace = (work / "wormhole.trace").read_text()
    assert "# mode plain" in trace
    assert len([l for l in trace.splitlines() if not l.startswith("#")]) == 3


def test_verify_trace_out_and_extra_witnesses(work):
    target = work / "out.trace"
    code, out, _ = run("verify", str(work / "triangle_first.cfg"), "--keep-going",
                       "--trace-out", str(target))
    assert code == EXIT_VIOLATED
    assert target.exists() and "# property P2" in target.read_text()


def test_depth_bound_exit(work):
    code, out, _ = run("verify", str(work / "chain3.cfg"), "--max-depth", "2")
    assert code == EXIT_BOUND
    assert "not established" in out


@pytest.mark.parametrize("argv", [
    ["verify", "missing.cfg"],
    ["verify", "{chain}", "--props", "P9"],
    ["verify", "{chain}", "--msl", "9"],
    ["verify", "{chain}", "--max-depth", "0"],
    ["verify"],
    ["frobnicate"],
])
def test_usage_and_config_errors(work, argv, capsys):
    argv = [a.replace("{chain}", str(work / "chain3.cfg")) for a in argv]
    try:
        code = run(*argv)[0]
    except SystemExit as exc:  # argparse usage errors exit directly
        code = exc.code
    assert code == EXIT_CONFIG


def test_invalid_config_lists_diagnostics(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nodes 3\nmsl 7\nbogus\n")
    code, _, err = run("verify", str(bad))
    assert code == EXIT_CONFIG
    assert "E06-value-range" in err and "E02-unknown-directive" in err and "E09-missing" in err


def test_replay_narrates_wormhole(work):
    cfg = str(work / "wormhole.cfg")
    run("verify", cfg, "--mode", "plain", "--props", "P5")
    code, out, _ = run("replay", cfg, str(work / "wormhole.trace"))
    assert code == EXIT_HOLDS
    lines = out.strip().splitlines()
    assert lines[0] == "post-discovery neighbor ranks:"
    assert "step 1: node 0 originates a route request for 2" in out
    assert "step 3: node 0 receives RREP" in out
    assert lines[-1].endswith("via tunnel endpoint 2")
    assert lines[-1].startswith("P5 violated:")


def test_replay_empty_trace(work):
    empty = work / "empty.trace"
    empty.write_text("")
    code, out, _ = run("replay", str(work / "chain3.cfg"), str(empty))
    assert code == EXIT_HOLDS
    assert "node 1: 0: rank 4" in out
    assert "satisfies" in out.splitlines()[-1]


def test_replay_on_wrong_scenario(work):
    run("verify", str(work / "wormhole.cfg"), "--mode", "plain", "--props", "P5")
    code, _, err = run("replay", str(work / "chain3.cfg"), str(work / "wormhole.trace"))
    assert code == EXIT_REPLAY and "replay error" in err


def test_replay_malformed_and_missing(work):
    junk = work / "junk.trace"
    junk.write_text("1 warp 0 1 zz\n")
    assert run("replay", str(work / "chain3.cfg"), str(junk))[0] == EXIT_REPLAY
    assert run("replay", str(work / "chain3.cfg"), str(work / "none.trace"))[0] == EXIT_CONFIG


def test_export_promela(work):
    code, out, _ = run("export-promela", str(work / "chain3.cfg"))
    assert code == EXIT_HOLDS and "proctype node_0()" in out
    target = work / "chain3.pml"
    assert run("export-promela", str(work / "chain3.cfg"), "--out", str(target))[0] == EXIT_HOLDS
    assert target.read_text() == out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "saodvcheck", "verify", str(SCENARIOS / "chain3.cfg")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "verdict: holds" in res.stdout
