import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from hitlist6 import cli

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
SCN = str(FIXTURES / "basic.scn")
RIB = str(FIXTURES / "basic.rib")


def test_live_requires_opt_in_and_blocklist(capsys):
    assert cli.main(["tbt", "--live", "--seed", "1", "--scan-id", "1", "--prefix", "2001:db8::/64"]) == 3
    assert "--i-understand-ethics" in capsys.readouterr().err
    argv = ["tbt", "--live", "--i-understand-ethics", "--seed", "1", "--scan-id", "1", "--prefix", "2001:db8::/64"]
    assert cli.main(argv) == 3
    assert "--blocklist" in capsys.readouterr().err
    bl = str(FIXTURES / "blocklist.txt")
    assert cli.main(argv + ["--blocklist", bl]) == 1
    assert "no live probing engine" in capsys.readouterr().err


def test_empty_history_report(tmp_path, capsys):
    assert cli.main(["report", "responsiveness", "--store", str(tmp_path / "none"), "--scan", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "protocol,addresses,ases,unmapped"
    assert out[1:] == [f"{p},0,0,0" for p in ("icmp", "tcp80", "tcp443", "udp53", "udp443", "total")]


def test_seed_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HITLIST6_SEED", "7")
    assert cli.main(["tbt", "--scenario", SCN, "--scan-id", "2", "--prefix", "2001:db8:a1::/64"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("2001:db8:a1::/64,")


def test_missing_seed_is_a_usage_error(monkeypatch):
    monkeypatch.delenv("HITLIST6_SEED", raising=False)
    with pytest.raises(SystemExit) as exc:
        cli.main(["tbt", "--scenario", SCN, "--scan-id", "2", "--prefix", "2001:db8:a1::/64"])
    assert exc.value.code == 2


def test_simnet_run_refuses_existing_state(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["simnet-run", SCN, "--seed", "3", "--scans", "2", "--out", str(out), "--rib", RIB]
    assert cli.main(argv) == 0
    assert (out / "aliased.txt").read_text().splitlines() == [
        "2001:db8:a1::/64",
        "2001:db8:a2:5::/64",
        "2001:db8:b0::/48",
    ]
    assert cli.main(argv) == 1
    assert "already holds" in capsys.readouterr().err


def test_scan_rejects_repeated_scan_id(tmp_path, capsys):
    state = tmp_path / "state"
    (tmp_path / "in.txt").write_text("2001:db8:1:10::10\n2001:db8:a1::1\n")
    (tmp_path / "m.tsv").write_text("in.txt\tseed\n")
    assert cli.main(["ingest", str(tmp_path / "m.tsv"), "--store", str(state), "--date", "2022-01-01"]) == 0
    argv = ["scan", "--store", str(state), "--scenario", SCN, "--seed", "1", "--scan-id", "1", "--date", "2022-01-02"]
    assert cli.main(argv) == 0
    assert cli.main(argv) == 1
    assert "already exists" in capsys.readouterr().err


def test_bad_scenario_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("seed 1\nhost nope\n")
    assert cli.main(["tbt", "--scenario", str(bad), "--seed", "1", "--scan-id", "1", "--prefix", "::/64"]) == 1
    assert "bad.scn:2" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("hitlist6") is None, reason="console script not installed")
def test_console_script_entry_point():
    done = subprocess.run(["hitlist6", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "simnet-run" in done.stdout


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "hitlist6.cli", "report", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "aliased-fraction" in done.stdout
