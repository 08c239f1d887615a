"""Scenario library: parsing, serialization and arming of fault scenarios.

File grammar (UTF-8)::

    library  := record (blank-line+ record)*
    record   := line+
    line     := key ":" " "? value          # '#' lines are comments

Keys, in canonical order: ``id``, ``desc``, then one or more fault groups
``site``, ``kind``, ``period``, ``value``, ``phase``, ``start``, ``end``
(each ``site`` line opens a new fault), then ``expect_homing``,
``expect_teleop``, ``runs``, ``paper_row``.

Values:

* ``kind``: ``STUCK_AT`` or ``INTERMITTENT`` (``period`` >= 1, default 1)
* ``value``: a number, ``out_of_range``, ``random`` or ``random <lo> <hi>``
* ``phase``: ``HOMING``, ``TELEOP`` or ``ALWAYS``; ``start``/``end`` are
  tick offsets from the phase start, ``end`` may be ``open``
* ``expect_*``: comma-separated outcome labels; omit the key for no
  expectation in that phase (at least one phase must be given)
* ``runs``: optional per-scenario run count overriding the campaign default
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .injection import FaultSpec, Kind, Phase, Site, Trigger, ValueSource, arm_faults
from .monitors import OutcomeLabel, sort_labels

PHASES = ("HOMING", "TELEOP")
FAULT_KEYS = ("site", "kind", "period", "value", "phase", "start", "end")
KEYS = ("id", "desc", *FAULT_KEYS, "expect_homing", "expect_teleop", "runs", "paper_row")
DEFAULT_LIBRARY = Path(__file__).with_name("data") / "default_library.txt"


class LibraryError(ValueError):
    def __init__(self, code: str, line: int | None = None, detail: str = "") -> None:
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}{where}: {detail}" if detail else f"{code}{where}")
        self.code = code
        self.line = line


@dataclass(frozen=True)
class ScenarioRecord:
    id: str
    description: str
    faults: tuple[FaultSpec, ...]
    expected: dict[str, tuple[str, ...]]
    runs: int | None = None
    paper_row: str = ""

    @property
    def family(self) -> str:
        return self.id.split("-", 1)[0]


def _parse_value(text: str, lineno: int) -> ValueSource:
    parts = text.split()
    try:
        if parts[0].lower() == "out_of_range" and len(parts) == 1:
            return ValueSource("OUT_OF_RANGE")
        if parts[0].lower() == "random":
            if len(parts) == 1:
                return ValueSource("RANDOM")
            if len(parts) == 3:
                return ValueSource("RANDOM", lo=float(parts[1]), hi=float(parts[2]))
        if len(parts) == 1:
            return ValueSource("LITERAL", float(parts[0]))
    except (ValueError, IndexError):
        pass
    raise LibraryError("PARSE_ERROR", lineno, f"bad value {text!r}")


def _parse_labels(text: str, lineno: int) -> tuple[str, ...]:
    labels = [x.strip() for x in text.split(",") if x.strip()]
    if not labels:
        raise LibraryError("PARSE_ERROR", lineno, "empty label list")
    for label in labels:
        if label not in OutcomeLabel.__members__:
            raise LibraryError("UNKNOWN_LABEL", lineno, label)
    return tuple(sort_labels(labels))


def _int(text: str, lineno: int, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise LibraryError("PARSE_ERROR", lineno, f"{key} must be an integer, got {text!r}") from None


def _build_fault(group: dict, lineno: int) -> FaultSpec:
    try:
        site = Site(group["site"])
    except ValueError:
        raise LibraryError("UNKNOWN_SITE", lineno, group["site"]) from None
    try:
        kind = Kind(group.get("kind", "STUCK_AT"))
        phase = Phase(group.get("phase", "ALWAYS"))
    except ValueError as exc:
        raise LibraryError("PARSE_ERROR", lineno, str(exc)) from None
    period = _int(group.get("period", "1"), lineno, "period")
    start = _int(group.get("start", "0"), lineno, "start")
    end_text = group.get("end", "open")
    end = None if end_text == "open" else _int(end_text, lineno, "end")
    value = _parse_value(group.get("value", "0"), lineno)
    try:
        return FaultSpec(site, kind, value, Trigger(phase, start, end), period)
    except ValueError as exc:
        raise LibraryError("PARSE_ERROR", lineno, str(exc)) from None


def _build_record(lines: list[tuple[int, str, str]]) -> ScenarioRecord:
    first_line = lines[0][0]
    head: dict[str, str] = {}
    faults: list[FaultSpec] = []
    group: dict[str, str] | None = None
    group_line = first_line
    expected: dict[str, tuple[str, ...]] = {}
    for lineno, key, value in lines:
        if key not in KEYS:
            raise LibraryError("PARSE_ERROR", lineno, f"unknown key {key!r}")
        if key == "site":
            if group is not None:
                faults.append(_build_fault(group, group_line))
            group, group_line = {"site": value}, lineno
        elif key in FAULT_KEYS:
            if group is None or key in group:
                raise LibraryError("PARSE_ERROR", lineno, f"{key!r} outside a fault group")
            group[key] = value
        elif key in ("expect_homing", "expect_teleop"):
            expected[key.split("_", 1)[1].upper()] = _parse_labels(value, lineno)
        else:
            if key in head:
                raise LibraryError("PARSE_ERROR", lineno, f"duplicate key {key!r}")
            head[key] = value
    if group is not None:
        faults.append(_build_fault(group, group_line))
    if "id" not in head or not head["id"]:
        raise LibraryError("PARSE_ERROR", first_line, "record without id")
    if not expected:
        raise LibraryError("PARSE_ERROR", first_line, f"record {head['id']!r} has no expected outcomes")
    runs = None
    if "runs" in head:
        runs = _int(head["runs"], first_line, "runs")
        if runs < 1:
            raise LibraryError("PARSE_ERROR", first_line, "runs must be >= 1")
    return ScenarioRecord(head["id"], head.get("desc", ""), tuple(faults),
                          {p: expected[p] for p in PHASES if p in expected}, runs, head.get("paper_row", ""))


def parse_library(lines: Iterable[str]) -> list[ScenarioRecord]:
    records: list[ScenarioRecord] = []
    block: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(list(lines) + [""], start=1):
        text = raw.rstrip("\n").rstrip()
        if text.lstrip().startswith("#"):
            continue
        if not text.strip():
            if block:
                records.append(_build_record(block))
                block = []
            continue
        if ":" not in text:
            raise LibraryError("PARSE_ERROR", lineno, f"expected 'key: value', got {text!r}")
        key, value = text.split(":", 1)
        block.append((lineno, key.strip(), value.strip()))
    seen = set()
    for r in records:
        if r.id in seen:
            raise LibraryError("PARSE_ERROR", None, f"duplicate scenario id {r.id!r}")
        seen.add(r.id)
    return records


def load_scenario_library(path: str | Path = DEFAULT_LIBRARY) -> list[ScenarioRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_library(fh)


def serialize_record(r: ScenarioRecord) -> str:
    out = [f"id: {r.id}", f"desc: {r.description}"]
    for f in r.faults:
        out += [f"site: {f.site.value}", f"kind: {f.kind.value}", f"period: {f.period}",
                f"value: {f.value.text()}", f"phase: {f.trigger.phase.value}", f"start: {f.trigger.start}",
                f"end: {'open' if f.trigger.end is None else f.trigger.end}"]
    for phase in PHASES:
        if phase in r.expected:
            out.append(f"expect_{phase.lower()}: {', '.join(r.expected[phase])}")
    if r.runs is not None:
        out.append(f"runs: {r.runs}")
    out.append(f"paper_row: {r.paper_row}")
    return "\n".join(out) + "\n"


def serialize_library(records: Iterable[ScenarioRecord]) -> str:
    return "\n".join(serialize_record(r) for r in records)


def find_scenario(records: Iterable[ScenarioRecord], scenario_id: str) -> ScenarioRecord:
    for r in records:
        if r.id == scenario_id:
            return r
    raise LibraryError("UNKNOWN_SCENARIO", None, scenario_id)


def arm_scenario(scenario: ScenarioRecord, world, seed: int = 0):
    """Install the scenario's interceptors into a freshly reset ``world``."""
    if world.tick != 0:
        raise LibraryError("WORLD_NOT_RESET", None, f"world at tick {world.tick}")
    s = world.session
    registry = arm_faults(scenario.faults, seed, s.homing_ticks, s.total_ticks)
    world.hooks = registry
    world.control.hooks = registry
    return registry


__all__ = ["ScenarioRecord", "LibraryError", "parse_library", "load_scenario_library", "serialize_record",
           "serialize_library", "arm_scenario", "find_scenario", "DEFAULT_LIBRARY"]
