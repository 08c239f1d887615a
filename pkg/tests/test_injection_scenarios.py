from __future__ import annotations

import random

import pytest

from telesafe.campaign import golden_run
from telesafe.config import SimConfig
from telesafe.injection import (FIELD_META, FaultSpec, InjectionError, Kind, Phase, Site, Trigger,
                                ValueSource, apply_fault, arm_faults, phase_window, sample_out_of_range)
from telesafe.scenarios import (LibraryError, ScenarioRecord, arm_scenario, find_scenario, load_scenario_library,
                                parse_library, serialize_library)
from telesafe.world import SimWorld


# -- injection -------------------------------------------------------------------------------------

def test_intermittent_period_one_equals_stuck_at():
    window = (10, 40)
    stuck = FaultSpec(Site.ESTIMATE_VELOCITY, Kind.STUCK_AT, ValueSource("LITERAL", 0))
    inter = FaultSpec(Site.ESTIMATE_VELOCITY, Kind.INTERMITTENT, ValueSource("LITERAL", 0), period=1)
    for t in range(60):
        orig = [float(t)] * 8
        assert apply_fault(orig, t, stuck, 0.0, window) == apply_fault(orig, t, inter, 0.0, window)


def test_intermittent_fires_every_period():
    spec = FaultSpec(Site.NETWORK_PEDAL, Kind.INTERMITTENT, ValueSource("LITERAL", 7), period=10)
    fired = [t for t in range(100) if apply_fault(1, t, spec, 7, (5, 99)) == 7]
    assert fired == list(range(5, 100, 10))


def test_out_of_range_samples_are_invalid():
    rng = random.Random(1)
    for site, meta in FIELD_META.items():
        for _ in range(200):
            assert not meta.is_valid(sample_out_of_range(meta, rng)), site
    with pytest.raises(InjectionError) as e:
        sample_out_of_range(None, rng)
    assert e.value.code == "NO_RANGE_DECLARED"


def test_random_values_are_seeded():
    spec = FaultSpec(Site.PUT_USB_CURRENTS, value=ValueSource("RANDOM"))
    a = arm_faults([spec], 42, 10_000, 30_000).hooks[Site.PUT_USB_CURRENTS].value
    b = arm_faults([spec], 42, 10_000, 30_000).hooks[Site.PUT_USB_CURRENTS].value
    c = arm_faults([spec], 43, 10_000, 30_000).hooks[Site.PUT_USB_CURRENTS].value
    assert a == b and FIELD_META[Site.PUT_USB_CURRENTS].is_valid(a)
    assert isinstance(c, int)


def test_phase_windows():
    assert phase_window(Trigger(Phase.HOMING, 100, 104), 10_000, 30_000) == (100, 104)
    assert phase_window(Trigger(Phase.TELEOP, 0, None), 10_000, 30_000) == (10_000, 29_999)
    assert phase_window(Trigger(Phase.HOMING, 0, 50_000), 10_000, 30_000) == (0, 9_999)
    with pytest.raises(InjectionError):
        Trigger(Phase.ALWAYS, 10, 5)
    with pytest.raises(InjectionError):
        FaultSpec(Site.NETWORK_PEDAL, period=0)


def test_duplicate_site_rejected():
    spec = FaultSpec(Site.NETWORK_PEDAL)
    with pytest.raises(InjectionError) as e:
        arm_faults([spec, spec], 0, 10, 20)
    assert e.value.code == "DUPLICATE_SITE"


def test_registry_records_fired_sites():
    reg = arm_faults([FaultSpec(Site.NETWORK_PEDAL, value=ValueSource("LITERAL", 1))], 0, 10, 20)
    assert reg.apply(Site.NETWORK_POSITION, [0.0], 3) == [0.0]
    assert reg.fired_mask == 0
    assert reg.apply(Site.NETWORK_PEDAL, 0, 3) == 1 and reg.fired_mask


def test_idle_injector_equals_golden():
    g = golden_run("circle")
    # armed but never inside its window: teleop offset past the end of the session
    spec = FaultSpec(Site.TORQUE_TO_DAC, value=ValueSource("LITERAL", -1000), trigger=Trigger(Phase.TELEOP, 50_000))
    s = g.session
    world = SimWorld(SimConfig(), s, arm_faults([spec], 0, s.homing_ticks, s.total_ticks))
    world.control.hooks = world.hooks
    world.run()
    assert world.trace.digest() == g.trace.digest()


# -- scenario library ------------------------------------------------------------------------------

RECORD = """id: demo
desc: demo record
site: NETWORK_PEDAL
kind: INTERMITTENT
period: 10
value: 0
phase: TELEOP
start: 0
end: open
expect_teleop: H3_UNAVAILABLE
"""


def test_default_library_roundtrip():
    lib = load_scenario_library()
    assert len(lib) >= 9
    assert parse_library(serialize_library(lib).splitlines()) == lib
    assert {r.family for r in lib} >= {"i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix"}


def test_empty_library_is_empty():
    assert parse_library([]) == []
    assert parse_library(["# only a comment", ""]) == []


def test_unknown_site():
    with pytest.raises(LibraryError) as e:
        parse_library(RECORD.replace("NETWORK_PEDAL", "NOWHERE").splitlines())
    assert e.value.code == "UNKNOWN_SITE" and e.value.line == 3


def test_unknown_label():
    with pytest.raises(LibraryError) as e:
        parse_library(RECORD.replace("H3_UNAVAILABLE", "H9").splitlines())
    assert e.value.code == "UNKNOWN_LABEL" and e.value.line == 10


def test_parse_error_carries_line():
    with pytest.raises(LibraryError) as e:
        parse_library(RECORD.replace("period: 10", "period ten").splitlines())
    assert e.value.code == "PARSE_ERROR" and e.value.line == 5
    with pytest.raises(LibraryError) as e:
        parse_library(RECORD.replace("value: 0", "value: banana").splitlines())
    assert e.value.code == "PARSE_ERROR"


def test_duplicate_ids_rejected():
    with pytest.raises(LibraryError):
        parse_library((RECORD + "\n" + RECORD).splitlines())


def test_two_faults_on_one_site_rejected_when_armed():
    text = RECORD.replace("expect_teleop", "site: NETWORK_PEDAL\nexpect_teleop")
    (rec,) = parse_library(text.splitlines())
    assert len(rec.faults) == 2
    g = golden_run("circle")
    with pytest.raises(InjectionError) as e:
        arm_scenario(rec, SimWorld(SimConfig(), g.session))
    assert e.value.code == "DUPLICATE_SITE"


def test_arm_scenario_installs_one_interceptor():
    g = golden_run("circle")
    vii = find_scenario(load_scenario_library(), "vii")
    world = SimWorld(SimConfig(), g.session)
    reg = arm_scenario(vii, world)
    assert len(reg) == 1 and Site.GET_USB_PLC_STATE in reg
    assert world.control.hooks is reg
    world.step()
    with pytest.raises(LibraryError) as e:
        arm_scenario(vii, world)
    assert e.value.code == "WORLD_NOT_RESET"
    with pytest.raises(LibraryError) as e:
        find_scenario([], "vii")
    assert e.value.code == "UNKNOWN_SCENARIO"


def test_scenario_family():
    assert ScenarioRecord("ii-100", "", (), {"TELEOP": ("NO_IMPACT",)}).family == "ii"
