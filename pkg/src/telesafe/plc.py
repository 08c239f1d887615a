"""PLC safety processor: watchdog timer, state mirror, brake command, buttons."""

from __future__ import annotations

import enum

from .config import PlcConfig

# Output word bits written by the control software each tick.
BIT_WATCHDOG = 0x1
BIT_PEDAL = 0x2
BIT_INIT_REQUEST = 0x4
BIT_HOMED = 0x8
OUTPUT_WORD_MAX = 0xF


class State(enum.IntEnum):
    """Shared by software and PLC; the integer value is the wire encoding."""

    E_STOP = 0
    INIT = 1
    PEDAL_UP = 2
    PEDAL_DOWN = 3


BRAKED_STATES = frozenset({State.E_STOP, State.PEDAL_UP})


class SafetyPlc:
    def __init__(self, cfg: PlcConfig | None = None) -> None:
        self.cfg = cfg or PlcConfig()
        if self.cfg.watchdog_timeout < 2:
            raise ValueError("watchdog timeout must be >= 2 ticks")
        self.state = State.E_STOP
        self.brakes_engaged = True
        self.watchdog_last_change = 0
        self._last_bit: int | None = None
        self._start_pending = False
        self._estop_pending = False
        self.estop_cause: str | None = None

    def press_start(self) -> None:
        self._start_pending = True

    def press_estop(self) -> None:
        self._estop_pending = True

    def watchdog_alive(self, tick: int) -> bool:
        return tick - self.watchdog_last_change < self.cfg.watchdog_timeout

    def tick(self, output_word: int, tick: int) -> tuple[State, bool]:
        word = int(output_word)
        bit = word & BIT_WATCHDOG
        if self._last_bit is not None and bit != self._last_bit:
            self.watchdog_last_change = tick
        self._last_bit = bit

        start, estop = self._start_pending, self._estop_pending
        self._start_pending = self._estop_pending = False
        alive = self.watchdog_alive(tick)
        s = self.state
        if estop:
            s, self.estop_cause = State.E_STOP, "button"
        elif not alive:
            if s != State.E_STOP:
                self.estop_cause = "watchdog"
            s = State.E_STOP
        elif s == State.E_STOP:
            if start:
                s, self.estop_cause = State.INIT, None
        elif s == State.INIT:
            if not word & BIT_INIT_REQUEST and word & BIT_HOMED:
                s = State.PEDAL_UP
        elif s == State.PEDAL_UP:
            if word & BIT_PEDAL:
                s = State.PEDAL_DOWN
        elif s == State.PEDAL_DOWN:
            if not word & BIT_PEDAL:
                s = State.PEDAL_UP
        self.state = s
        self.brakes_engaged = s in BRAKED_STATES
        return s, self.brakes_engaged


def plc_tick(plc: SafetyPlc, output_word: int, start_pressed: bool, estop_pressed: bool,
             tick: int) -> tuple[State, bool]:
    if start_pressed:
        plc.press_start()
    if estop_pressed:
        plc.press_estop()
    return plc.tick(output_word, tick)
