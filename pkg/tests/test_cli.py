import subprocess
import sys

import pytest

from mixflow.cli import main
from mixflow.storage import read_diagnostics, read_snapshot, write_snapshot

SMALL = """[grid]
M = 16
[approx]
dt = 1e-3
t_end = 0.01
[initial]
preset = perturbed
[output]
snapshot_every = 5
"""


@pytest.fixture
def small_run(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_is_a_usage_error():
    assert main(["frobnicate"]) == 2


def test_run_writes_csv_and_snapshots(small_run):
    cfg, out = small_run
    rows = read_diagnostics(out / "diagnostics.csv")
    assert len(rows) == 11 and float(rows[-1]["time"]) == pytest.approx(0.01)
    assert (out / "snapshot_000005.mxs").exists() and (out / "snapshot_000010.mxs").exists()
    assert read_snapshot(out / "final.mxs").time == pytest.approx(0.01)


def test_check_accepts_its_own_snapshots(small_run, capsys):
    cfg, out = small_run
    for snap in ("snapshot_000005.mxs", "final.mxs"):
        assert main(["check", "--snapshot", str(out / snap), "--config", str(cfg)]) == 0
    assert "ok:" in capsys.readouterr().out


def test_check_rejects_corrupt_snapshot(small_run, capsys):
    cfg, out = small_run
    bad = out / "bad.mxs"
    bad.write_bytes((out / "final.mxs").read_bytes()[:-16])
    assert main(["check", "--snapshot", str(bad), "--config", str(cfg)]) == 1
    assert "SnapshotTruncatedError" in capsys.readouterr().err


def test_check_detects_ledger_violation(small_run, capsys):
    cfg, out = small_run
    s = read_snapshot(out / "final.mxs")
    s.rho = s.rho * (1 + 1e-6)
    write_snapshot(s, out / "tampered.mxs")
    assert main(["check", "--snapshot", str(out / "tampered.mxs"), "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "total mass ledger" in err and "replay mismatch" in err


def test_bad_config_is_a_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[physics]\ngamma_minus = 4\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 2: γ⁻ > 5 required" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_aborted_run_exits_with_failure(tmp_path, capsys):
    cfg = tmp_path / "abort.cfg"
    cfg.write_text(SMALL.replace("t_end = 0.01", "t_end = 0.01\nrhon_band = 1e-16"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "density band" in capsys.readouterr().err


def test_mms_continuity(capsys):
    assert main(["mms", "--case", "continuity"]) == 0
    out = capsys.readouterr().out
    assert "observed temporal order" in out and "FAILED" not in out


def test_mms_needs_three_levels():
    assert main(["mms", "--case", "continuity", "--levels", "2"]) == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mixflow.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "mms" in proc.stdout
