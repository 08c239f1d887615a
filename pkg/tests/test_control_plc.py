from __future__ import annotations

import random

import pytest

from telesafe.codec import IDENTITY_QUAT, ArmPayload, ConsolePacket, encode_packet
from telesafe.config import ControlConfig, PlcConfig
from telesafe.control import ControlSoftware, overdrive_detect, pd_control, sync_state_machine, torque_to_dac
from telesafe.plc import BIT_HOMED, BIT_INIT_REQUEST, BIT_PEDAL, SafetyPlc, State

CC = ControlConfig()


# -- PLC -------------------------------------------------------------------------------------------

def _plc_in(state: State) -> tuple[SafetyPlc, int]:
    """PLC driven into ``state`` with a live watchdog; returns it and the next tick."""
    plc = SafetyPlc()
    plc.press_start()
    bit, t = 0, 0
    words = {State.INIT: [BIT_INIT_REQUEST], State.PEDAL_UP: [BIT_INIT_REQUEST, BIT_HOMED],
             State.PEDAL_DOWN: [BIT_INIT_REQUEST, BIT_HOMED, BIT_HOMED | BIT_PEDAL]}[state]
    for w in words:
        bit ^= 1
        plc.tick(w | bit, t)
        t += 1
    assert plc.state == state
    return plc, t


def test_watchdog_latency_exact_randomized():
    rng = random.Random(5)
    W = PlcConfig().watchdog_timeout
    for _ in range(1000):
        plc, t = _plc_in(rng.choice([State.INIT, State.PEDAL_UP, State.PEDAL_DOWN]))
        word = {State.INIT: BIT_INIT_REQUEST, State.PEDAL_UP: BIT_HOMED,
                State.PEDAL_DOWN: BIT_HOMED | BIT_PEDAL}[plc.state]
        bit = t % 2
        c = t + rng.randint(0, 50)
        for tick in range(t, c + W + 1):
            if tick <= c:
                bit ^= 1
            state, brakes = plc.tick(word | bit, tick)
            if tick < c + W:
                assert state != State.E_STOP
        assert state == State.E_STOP and brakes and plc.estop_cause == "watchdog"


def test_start_press_releases_brakes_into_init():
    plc = SafetyPlc()
    plc.tick(0, 0)
    plc.press_start()
    state, brakes = plc.tick(1, 1)
    assert state == State.INIT and not brakes


def test_pedal_drop_engages_brakes_same_tick():
    plc, t = _plc_in(State.PEDAL_DOWN)
    state, brakes = plc.tick(BIT_HOMED | (t % 2), t)
    assert state == State.PEDAL_UP and brakes


def test_estop_button_latches():
    plc, t = _plc_in(State.PEDAL_DOWN)
    plc.press_estop()
    assert plc.tick(BIT_HOMED | BIT_PEDAL | (t % 2), t) == (State.E_STOP, True)
    assert plc.tick(BIT_HOMED | BIT_PEDAL | ((t + 1) % 2), t + 1)[0] == State.E_STOP


# -- control software ------------------------------------------------------------------------------

def test_state_estimate_velocity():
    c = ControlSoftware()
    c.state_estimate([0.0] * 8, 0)
    assert c.est_v == [0.0] * 8
    c.state_estimate([0.0] * 8, 1)
    assert c.est_v == [0.0] * 8
    c.state_estimate([0.001] * 8, 2)
    assert c.est_v == pytest.approx([1.0] * 8, abs=1e-12)


def test_network_delta_unit_conversion_and_absent_packet():
    c = ControlSoftware()
    c.sw_state = State.PEDAL_DOWN
    x0 = c.desired_pose[0][0]
    c.network_process(None, 0)
    assert c.desired_pose[0][0] == x0
    arm = ArmPayload((1000, 0, 0), IDENTITY_QUAT, 0)
    c.network_process(encode_packet(ConsolePacket(1, True, arm, arm)), 1)
    assert c.desired_pose[0][0] == pytest.approx(x0 + 0.001, abs=1e-15)
    # stale sequence is dropped
    c.network_process(encode_packet(ConsolePacket(1, True, arm, arm)), 2)
    assert c.desired_pose[0][0] == pytest.approx(x0 + 0.001, abs=1e-15)
    assert "STALE_PACKET" in c.events


def test_decode_error_is_a_dropped_packet():
    c = ControlSoftware()
    c.network_process(b"\x00" * 10, 0)
    assert c.events == ["DECODE_ERROR:BAD_LENGTH"]


def test_pd_control_and_overdrive():
    assert pd_control([0.1] * 8, [0.0] * 8, [0.0] * 8, CC) == pytest.approx([20, 20, 40, 20] * 2)
    assert pd_control([0.1] * 8, [0.0] * 8, [0.0] * 8, CC, State.PEDAL_UP) == [0.0] * 8
    out, stop = overdrive_detect([5.0, 9.0, -9.5, 0, 0, 0, 0, 0], CC)
    assert out[:3] == [5.0, 8.0, -8.0] and not stop
    out, stop = overdrive_detect([20.0] + [0.0] * 7, CC)
    assert stop and out == [0.0] * 8
    assert overdrive_detect([float("nan")] + [0.0] * 7, CC)[1]
    assert torque_to_dac([8.0, -10.0], CC) == [800, -1000]


def test_overdrive_disables_watchdog_for_good():
    c = ControlSoftware()
    c.sw_state = State.PEDAL_DOWN
    c.desired_joints = [1.0] * 8
    c.command_currents(0)
    assert c.sw_state == State.E_STOP and not c.watchdog_enabled
    bits = set()
    for t in range(1, 10):
        c.update_atmel_outputs(t)
        bits.add(c.watchdog_bit)
    assert len(bits) == 1


def test_output_word_never_carries_pedal_outside_pedal_down():
    c = ControlSoftware()
    for s in State:
        c.sw_state = s
        word = c.update_atmel_outputs(0)
        assert bool(word & BIT_PEDAL) == (s == State.PEDAL_DOWN)
        assert bool(word & BIT_INIT_REQUEST) == (s == State.INIT)


def test_sync_follows_plc():
    assert sync_state_machine(State.PEDAL_DOWN, State.E_STOP, True) == State.E_STOP
    assert sync_state_machine(State.E_STOP, State.INIT, False) == State.INIT
    assert sync_state_machine(State.PEDAL_UP, State.PEDAL_UP, True) == State.PEDAL_DOWN
    assert sync_state_machine(State.PEDAL_DOWN, State.PEDAL_DOWN, False) == State.PEDAL_UP
    assert sync_state_machine(State.INIT, State.INIT, True) == State.INIT
