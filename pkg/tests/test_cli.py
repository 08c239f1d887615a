from __future__ import annotations

import json

import pytest

from telesafe import cli
from telesafe.campaign import CampaignError


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["run"])
    assert e.value.code == 1


def test_bad_runs_is_usage_error(tmp_path):
    assert cli.main(["campaign", "--out", str(tmp_path), "--runs", "0"]) == 1


def test_scenarios_and_validate(capsys, tmp_path):
    assert cli.main(["scenarios"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("i ")
    assert cli.main(["validate-library", str(cli.DEFAULT_LIBRARY)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("id: x\nsite: NOWHERE\nexpect_teleop: NO_IMPACT\n")
    assert cli.main(["validate-library", str(bad)]) == 2
    assert "UNKNOWN_SITE" in capsys.readouterr().err


def test_golden_summary(capsys, tmp_path):
    assert cli.main(["golden", "--trajectory", "circle", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["labels"] == ["NO_IMPACT"]
    assert summary["tracking_rms_m"] <= 0.002
    assert (tmp_path / "golden_trace.csv").exists()


def test_golden_failure_exits_3(monkeypatch):
    def boom(*a, **k):
        raise CampaignError("GOLDEN_FAILED", "test")
    monkeypatch.setattr(cli, "golden_run", boom)
    assert cli.main(["golden"]) == 3


def test_run_unknown_scenario_exits_2():
    assert cli.main(["run", "--scenario", "nope"]) == 2


def test_run_campaign_and_report(capsys, tmp_path):
    lib = tmp_path / "lib.txt"
    lib.write_text("id: quiet\ndesc: pedal pinned down in teleop\nsite: NETWORK_PEDAL\nvalue: 1\n"
                   "phase: TELEOP\nexpect_teleop: NO_IMPACT\n")
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", "quiet", "--library", str(lib), "--trace", "--out", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["observed"]["TELEOP"] == ["NO_IMPACT"]
    assert list(tmp_path.glob("trace_quiet_0_0.csv"))
    assert cli.main(["campaign", "--library", str(lib), "--runs", "1", "--out", str(out), "--quiet"]) == 0
    assert "matched: 1/1" in capsys.readouterr().out
    # a second campaign into the same directory needs --resume
    assert cli.main(["campaign", "--library", str(lib), "--runs", "1", "--out", str(out)]) == 2
    assert cli.main(["campaign", "--library", str(lib), "--runs", "1", "--out", str(out), "--resume"]) == 0
    capsys.readouterr()
    csv_path = tmp_path / "t.csv"
    assert cli.main(["report", "--in", str(out), "--csv", str(csv_path)]) == 0
    assert "quiet" in capsys.readouterr().out and csv_path.read_text().startswith("scenario,")
