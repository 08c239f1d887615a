"""Campaign automation: golden runs, single injection runs, persistence,
resume and the summary report."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import tempfile
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import SimConfig
from .injection import arm_faults, phase_window, stable_seed
from .monitors import OutcomeLabel, classify_outcome, evaluate_uca, homing_complete_tick, phase_ranges
from .plc import State
from .scenarios import DEFAULT_LIBRARY, ScenarioRecord, arm_scenario, load_scenario_library
from .trajectory import Shape, generate_trajectory, load_trajectory
from .world import Session, SimWorld, build_session

RECORD_FORMAT_VERSION = 1
TRAJECTORY_AMPLITUDE = 0.03
ESTOP_EVENTS = ("OVERDRIVE_ESTOP", "PLC_ESTOP", "SW_ESTOP_PLC")


class CampaignError(RuntimeError):
    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class CampaignConfig:
    library: str = str(DEFAULT_LIBRARY)
    runs: int = 8
    base_seed: int = 0
    trajectory: str = "circle"
    out_dir: str | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    write_traces: bool = False

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise CampaignError("BAD_CONFIG", "runs must be >= 1")


# -- golden runs -------------------------------------------------------------

@dataclass
class GoldenRun:
    trajectory_id: str
    digest: str
    trace: object
    homing_tick: int
    phases: dict[str, tuple[int, int]]
    snapshot: SimWorld | None  # world state at the start of teleoperation
    session: Session


_GOLDEN_CACHE: dict[tuple[str, str], GoldenRun] = {}
_SESSION_CACHE: dict[tuple[str, str], Session] = {}


def trajectory_samples(spec: str, cfg: SimConfig):
    """``circle``/``line`` (synthetic, one teleop phase long) or a trajectory file path."""
    name = spec.lower()
    if name in ("circle", "line"):
        return generate_trajectory(Shape(name.upper()), cfg.session.teleop_ticks - 1, TRAJECTORY_AMPLITUDE,
                                   control=cfg.control, plant=cfg.plant), name
    path = Path(spec)
    data = path.read_bytes()
    return load_trajectory(path), f"file:{path.name}:{hashlib.sha256(data).hexdigest()[:12]}"


def get_session(spec: str, cfg: SimConfig) -> Session:
    key = (spec, cfg.digest())
    if key not in _SESSION_CACHE:
        samples, tid = trajectory_samples(spec, cfg)
        _SESSION_CACHE[key] = build_session(samples, cfg, tid)
    return _SESSION_CACHE[key]


def _fork(world: SimWorld) -> SimWorld:
    return copy.deepcopy(world, {id(world.session): world.session})


def golden_run(trajectory: str = "circle", cfg: SimConfig | None = None) -> GoldenRun:
    """Fault-free reference run, cached per (trajectory, config digest).

    Raises ``GOLDEN_FAILED`` if it does not home within the homing phase or
    raises any E-STOP or hazard.
    """
    cfg = cfg or SimConfig()
    session = get_session(trajectory, cfg)
    key = (session.trajectory_id, cfg.digest())
    if key in _GOLDEN_CACHE:
        return _GOLDEN_CACHE[key]
    world = SimWorld(cfg, session)
    world.run(session.homing_ticks)
    snapshot = _fork(world)
    world.run(session.total_ticks - session.homing_ticks)
    trace = world.trace
    home = homing_complete_tick(trace)
    if home is None or home >= session.homing_ticks:
        raise CampaignError("GOLDEN_FAILED", "fault-free run did not complete homing")
    estops = sorted({e for evs in trace.events.values() for e in evs if e.startswith(ESTOP_EVENTS)})
    if estops:
        raise CampaignError("GOLDEN_FAILED", f"fault-free run raised {estops}")
    outcome = classify_outcome(trace, trace, cfg=cfg, golden_homing_tick=home)
    bad = {p: o.labels for p, o in outcome.items() if o.labels != [OutcomeLabel.NO_IMPACT.value]}
    if bad:
        raise CampaignError("GOLDEN_FAILED", f"fault-free run classified {bad}")
    g = GoldenRun(session.trajectory_id, cfg.digest(), trace, home, phase_ranges(cfg), snapshot, session)
    _GOLDEN_CACHE[key] = g
    return g


# -- single runs -------------------------------------------------------------

@dataclass
class RunRecord:
    scenario_id: str
    run_index: int
    seed: int
    config_digest: str
    trajectory_id: str
    observed: dict[str, list[str]]
    expected: dict[str, list[str]]
    match: dict[str, bool]
    first_hazard_tick: dict[str, int | None]
    crossings: dict[str, dict[str, int]]
    jump_class: dict[str, str]
    stats: dict[str, dict]
    fault_values: dict[str, float]
    event_counts: dict[str, int]
    uca_counts: dict[str, int]
    first_uca_tick: int | None
    brake_state_violations: int
    homing_complete_tick: int | None
    homing_restarts: int
    final_sw_state: str
    final_plc_state: str
    ticks: dict[str, int]
    trace_digest: str
    wall_clock_s: float = 0.0
    format_version: int = RECORD_FORMAT_VERSION

    @property
    def matched(self) -> bool:
        return all(self.match.values())

    def key(self) -> tuple[str, int]:
        return (self.scenario_id, self.run_index)

    def comparable(self) -> dict:
        """Record content without wall-clock fields."""
        d = asdict(self)
        d.pop("wall_clock_s")
        return d


def run_seed(base_seed: int, scenario_id: str, run_index: int) -> int:
    return (base_seed ^ stable_seed(scenario_id, run_index)) & 0xFFFFFFFFFFFFFFFF


def _event_counts(trace) -> dict[str, int]:
    c: Counter = Counter()
    for evs in trace.events.values():
        for e in evs:
            c[e.split(":", 1)[0]] += 1
    return dict(sorted(c.items()))


def brake_state_violations(trace) -> int:
    brakes = trace.col("brakes").astype(bool)
    plc = trace.col("plc_state")
    braked = (plc == int(State.E_STOP)) | (plc == int(State.PEDAL_UP))
    return int(np.count_nonzero(brakes != braked))


def simulate_scenario(scenario: ScenarioRecord, seed: int, cfg: SimConfig, golden: GoldenRun) -> SimWorld:
    """Run one injected session. Faults that cannot fire before teleoperation
    start from the golden snapshot (an idle injector is bit-transparent)."""
    s = golden.session
    firsts = [phase_window(f.trigger, s.homing_ticks, s.total_ticks)[0] for f in scenario.faults]
    if golden.snapshot is not None and firsts and min(firsts) >= s.homing_ticks:
        world = _fork(golden.snapshot)
        registry = arm_faults(scenario.faults, seed, s.homing_ticks, s.total_ticks)
        world.hooks = registry
        world.control.hooks = registry
    else:
        world = SimWorld(cfg, s)
        arm_scenario(scenario, world, seed)
    return world.run(s.total_ticks - world.tick)


def run_single(scenario: ScenarioRecord, run_index: int, config: CampaignConfig | None = None,
               golden: GoldenRun | None = None) -> RunRecord:
    config = config or CampaignConfig()
    cfg = config.sim
    golden = golden or golden_run(config.trajectory, cfg)
    seed = run_seed(config.base_seed, scenario.id, run_index)
    t0 = time.perf_counter()
    world = simulate_scenario(scenario, seed, cfg, golden)
    trace = world.trace
    outcome = classify_outcome(trace, golden.trace, cfg=cfg, golden_homing_tick=golden.homing_tick)
    ucas = evaluate_uca(trace, cfg)
    observed = {p: o.labels for p, o in outcome.items()}
    expected = {p: list(v) for p, v in scenario.expected.items()}
    match = {p: set(expected[p]) <= set(observed[p]) for p in expected}
    if config.write_traces and config.out_dir:
        tdir = Path(config.out_dir) / "traces"
        tdir.mkdir(parents=True, exist_ok=True)
        trace.write_csv(tdir / f"{_file_stem(scenario.id, run_index)}.csv")
    rec = RunRecord(
        scenario_id=scenario.id, run_index=run_index, seed=seed, config_digest=cfg.digest(),
        trajectory_id=golden.trajectory_id, observed=observed, expected=expected, match=match,
        first_hazard_tick={p: o.first_hazard_tick for p, o in outcome.items()},
        crossings={p: o.crossings for p, o in outcome.items()},
        jump_class={p: o.jump_class for p, o in outcome.items()},
        stats={p: o.stats.to_dict() for p, o in outcome.items()},
        fault_values={site.value: float(h.value) for site, h in world.hooks.hooks.items()},
        event_counts=_event_counts(trace),
        uca_counts=dict(sorted(Counter(u.uca_id for u in ucas).items())),
        first_uca_tick=min((u.start for u in ucas), default=None),
        brake_state_violations=brake_state_violations(trace),
        homing_complete_tick=homing_complete_tick(trace),
        homing_restarts=world.control.homing_restarts,
        final_sw_state=world.control.sw_state.name, final_plc_state=world.plc.state.name,
        ticks={p: b - a for p, (a, b) in golden.phases.items()},
        trace_digest=trace.digest(),
        wall_clock_s=round(time.perf_counter() - t0, 3))
    return _roundtrip(rec)


def _roundtrip(rec: RunRecord) -> RunRecord:
    # normalize numeric types exactly as persisted
    return record_from_json(record_to_json(rec))


# -- persistence ---------------------------------------------------------------

def _file_stem(scenario_id: str, run_index: int) -> str:
    return f"{scenario_id}__{run_index:04d}"


def record_to_json(rec: RunRecord) -> str:
    return json.dumps(asdict(rec), sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_from_json(text: str, where: str = "<string>") -> RunRecord:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CampaignError("PARSE_ERROR", f"{where}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CampaignError("PARSE_ERROR", f"{where}: not a record object")
    version = data.get("format_version")
    if version != RECORD_FORMAT_VERSION:
        raise CampaignError("VERSION_MISMATCH", f"{where}: format_version {version!r}, "
                                                f"expected {RECORD_FORMAT_VERSION}")
    try:
        return RunRecord(**data)
    except TypeError as exc:
        raise CampaignError("PARSE_ERROR", f"{where}: {exc}") from None


def write_run_record(path: str | Path, rec: RunRecord) -> None:
    """Atomic write: a reader sees either no file or the complete record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(record_to_json(rec) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_run_record(path: str | Path) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        return record_from_json(fh.read(), str(path))


def record_path(out_dir: str | Path, scenario_id: str, run_index: int) -> Path:
    return Path(out_dir) / "records" / f"{_file_stem(scenario_id, run_index)}.json"


def read_records(out_dir: str | Path) -> list[RunRecord]:
    rdir = Path(out_dir) / "records"
    if not rdir.is_dir():
        return []
    recs = [read_run_record(p) for p in sorted(rdir.glob("*.json"))]
    return sorted(recs, key=RunRecord.key)


# -- campaigns -----------------------------------------------------------------

def planned_runs(library: Sequence[ScenarioRecord], runs: int) -> list[tuple[ScenarioRecord, int]]:
    return [(sc, k) for sc in library for k in range(sc.runs if sc.runs is not None else runs)]


def _worker(args) -> RunRecord:
    scenario, run_index, config = args
    return run_single(scenario, run_index, config)


def run_campaign(config: CampaignConfig, resume: bool = True, jobs: int = 1,
                 stop_after: int | None = None, progress=None) -> list[RunRecord]:
    """Run every (scenario, run index) pair, persisting each record as it completes.

    Existing records are skipped when ``resume``. ``stop_after`` ends the
    campaign after that many new runs (used to exercise interruption).
    Returns the full record set on disk (or in memory when ``out_dir`` is None).
    """
    library = load_scenario_library(config.library)
    plan = planned_runs(library, config.runs)
    out = Path(config.out_dir) if config.out_dir else None
    todo = []
    for sc, k in plan:
        if out is not None and resume and record_path(out, sc.id, k).exists():
            continue
        todo.append((sc, k))
    if stop_after is not None:
        todo = todo[:stop_after]
    records: list[RunRecord] = []
    if todo:
        golden_run(config.trajectory, config.sim)  # fail fast, before any run

    def done(rec: RunRecord) -> None:
        if out is not None:
            write_run_record(record_path(out, rec.scenario_id, rec.run_index), rec)
        records.append(rec)
        if progress:
            progress(rec)

    if jobs > 1 and len(todo) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(_worker, [(sc, k, config) for sc, k in todo]):
                done(rec)
    else:
        for sc, k in todo:
            done(run_single(sc, k, config))
    if out is None:
        return sorted(records, key=RunRecord.key)
    all_records = read_records(out)
    if stop_after is None or len(todo) < stop_after:
        text, table = report(all_records)
        _atomic_text(out / "summary.txt", text)
        _atomic_text(out / "summary.csv", table)
    return all_records


def _atomic_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- report ----------------------------------------------------------------------

REPORT_COLUMNS = ("scenario", "runs", "expected_homing", "observed_homing", "expected_teleop",
                  "observed_teleop", "jumps_teleop", "match_rate")
HAZARDS = ("H1_POSITION", "H1_VELOCITY", "H2_STRESS", "H3_UNAVAILABLE")


def _dist(records: Iterable[RunRecord], phase: str) -> str:
    c = Counter("+".join(r.observed.get(phase, [])) or "-" for r in records)
    return "; ".join(f"{k} x{n}" for k, n in sorted(c.items(), key=lambda kv: (-kv[1], kv[0])))


def report(records: Sequence[RunRecord]) -> tuple[str, str]:
    """Per-scenario outcome table plus global totals, as (text, csv)."""
    digests = sorted({r.config_digest for r in records})
    if len(digests) > 1:
        raise CampaignError("CONFIG_MISMATCH", "records from configs " + ", ".join(digests))
    by: dict[str, list[RunRecord]] = {}
    for r in records:
        by.setdefault(r.scenario_id, []).append(r)
    rows = []
    for sid in sorted(by, key=_scenario_sort_key):
        rs = by[sid]
        exp = rs[0].expected
        jumps = Counter(r.jump_class.get("TELEOP", "none") for r in rs)
        rows.append({
            "scenario": sid, "runs": len(rs),
            "expected_homing": "+".join(exp.get("HOMING", [])) or "-",
            "observed_homing": _dist(rs, "HOMING"),
            "expected_teleop": "+".join(exp.get("TELEOP", [])) or "-",
            "observed_teleop": _dist(rs, "TELEOP"),
            "jumps_teleop": ", ".join(f"{k} x{n}" for k, n in sorted(jumps.items())),
            "match_rate": f"{sum(r.matched for r in rs) / len(rs):.2f}",
        })
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    table = buf.getvalue()

    lines = ["\t".join(REPORT_COLUMNS)]
    lines += ["\t".join(str(row[c]) for c in REPORT_COLUMNS) for row in rows]
    if records:
        hz = {h: sum(any(h in labels for labels in r.observed.values()) for r in records) for h in HAZARDS}
        mitigated = sum(any("MITIGATED_ESTOP" in labels for labels in r.observed.values()) for r in records)
        matched = sum(r.matched for r in records)
        lines += ["", f"runs: {len(records)}  scenarios: {len(by)}  matched: {matched}/{len(records)}",
                  "hazard runs: " + "  ".join(f"{h}={n}" for h, n in hz.items()),
                  f"mitigated runs: {mitigated}", f"config digest: {digests[0]}"]
    else:
        lines += ["", "runs: 0  scenarios: 0  matched: 0/0"]
    return "\n".join(lines) + "\n", table


def _scenario_sort_key(sid: str):
    roman = {"i": 1, "ii": 2, "iii": 3, "iv": 4, "v": 5, "vi": 6, "vii": 7, "viii": 8, "ix": 9}
    fam = sid.split("-", 1)[0]
    return (roman.get(fam, 99), sid)


__all__ = ["CampaignConfig", "CampaignError", "GoldenRun", "RunRecord", "golden_run", "run_single",
           "run_campaign", "write_run_record", "read_run_record", "read_records", "report", "run_seed",
           "simulate_scenario", "brake_state_violations", "record_path", "planned_runs"]
