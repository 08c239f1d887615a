from __future__ import annotations

import dataclasses
import json

import pytest

from telesafe.campaign import (CampaignConfig, CampaignError, golden_run, read_records, read_run_record,
                               record_from_json, record_path, record_to_json, report, run_campaign, run_seed,
                               run_single, write_run_record)
from telesafe.config import SimConfig
from telesafe.scenarios import find_scenario, load_scenario_library, serialize_library

SMALL = ("iii", "iv-teleop")


@pytest.fixture(scope="module")
def small_library(tmp_path_factory):
    lib = [dataclasses.replace(find_scenario(load_scenario_library(), sid), runs=None) for sid in SMALL]
    path = tmp_path_factory.mktemp("lib") / "small.txt"
    path.write_text(serialize_library(lib))
    return str(path)


@pytest.fixture(scope="module")
def record():
    return run_single(find_scenario(load_scenario_library(), "iii"), 0)


def test_iii_record_content(record):
    assert record.observed["TELEOP"] == ["H1_POSITION", "H1_VELOCITY", "H2_STRESS", "H3_UNAVAILABLE"]
    assert record.matched
    assert record.event_counts["CABLE_BREAK"] >= 2
    assert record.brake_state_violations == 0
    assert record.first_uca_tick is not None
    assert record.fault_values == {"TORQUE_TO_DAC": -1000.0}


def test_record_roundtrip(record, tmp_path):
    assert record_from_json(record_to_json(record)) == record
    p = tmp_path / "r.json"
    write_run_record(p, record)
    assert read_run_record(p) == record
    assert not list(tmp_path.glob(".tmp-*"))


def test_record_version_and_parse_errors(record):
    data = json.loads(record_to_json(record))
    data["format_version"] = 99
    with pytest.raises(CampaignError) as e:
        record_from_json(json.dumps(data))
    assert e.value.code == "VERSION_MISMATCH"
    with pytest.raises(CampaignError) as e:
        record_from_json('{"scenario_id": "x",\n  oops}')
    assert e.value.code == "PARSE_ERROR" and "line 2" in str(e.value)
    data["format_version"] = 1
    data["surprise"] = 1
    with pytest.raises(CampaignError) as e:
        record_from_json(json.dumps(data))
    assert e.value.code == "PARSE_ERROR"


def test_report_rejects_mixed_configurations(record):
    other = dataclasses.replace(record, run_index=1, config_digest="0" * 16)
    with pytest.raises(CampaignError) as e:
        report([record, other])
    assert e.value.code == "CONFIG_MISMATCH"


def test_report_table(record):
    text, table = report([record])
    assert "iii" in text
    assert table.splitlines()[0].startswith("scenario,")


def test_single_run_is_deterministic(record):
    again = run_single(find_scenario(load_scenario_library(), "iii"), 0)
    assert again.comparable() == record.comparable()
    assert again.trace_digest == record.trace_digest


def test_run_seed_depends_on_all_parts():
    seeds = {run_seed(b, s, k) for b in (0, 1) for s in ("a", "b") for k in (0, 1)}
    assert len(seeds) == 8


def test_zero_gain_golden_fails():
    cfg = SimConfig().with_control(kp=(0.0, 0.0, 0.0, 0.0))
    with pytest.raises(CampaignError) as e:
        golden_run("circle", cfg)
    assert e.value.code == "GOLDEN_FAILED"


def test_bad_config():
    with pytest.raises(CampaignError) as e:
        CampaignConfig(runs=0)
    assert e.value.code == "BAD_CONFIG"


def test_empty_library_campaign(tmp_path):
    lib = tmp_path / "empty.txt"
    lib.write_text("# nothing here\n")
    out = tmp_path / "out"
    assert run_campaign(CampaignConfig(library=str(lib), out_dir=str(out))) == []
    assert "runs: 0" in (out / "summary.txt").read_text()


def test_resume_skips_finished_runs(small_library, tmp_path):
    cfg = CampaignConfig(library=small_library, runs=2, out_dir=str(tmp_path))
    first = run_campaign(cfg, stop_after=1)
    assert len(first) == 1 and not (tmp_path / "summary.txt").exists()
    seen = []
    full = run_campaign(cfg, progress=seen.append)
    assert len(seen) == 3 and len(full) == 4
    assert (tmp_path / "summary.txt").exists()
    # nothing left to do
    seen.clear()
    assert run_campaign(cfg, progress=seen.append) == full and seen == []
    assert record_path(tmp_path, "iii", 1).exists()
    assert read_records(tmp_path) == full
