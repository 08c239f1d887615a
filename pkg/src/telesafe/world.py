"""Simulation world: control software, PLC and plant advanced in lock-step ticks."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .codec import encode_packet
from .config import SimConfig
from .control import ControlSoftware
from .injection import HookRegistry
from .plant import Plant
from .plc import SafetyPlc, State
from .trace import Trace
from .trajectory import TrajectorySample, constant_trajectory, home_positions, packet_stream


@dataclass(frozen=True)
class Session:
    """Pre-encoded console traffic for one run: ``packets[t]`` is bytes or None.

    Ticks ``[0, homing_ticks)`` hold the home pose with the pedal up; the
    teleoperation trajectory (rebased to start at the home pose) follows with
    the pedal down.
    """

    packets: tuple[bytes | None, ...]
    homing_ticks: int
    total_ticks: int
    trajectory_id: str

    def phase_of(self, tick: int) -> str:
        return "HOMING" if tick < self.homing_ticks else "TELEOP"


def build_session(trajectory: Sequence[TrajectorySample], cfg: SimConfig, trajectory_id: str = "custom") -> Session:
    sc = cfg.session
    homing = constant_trajectory(sc.homing_ticks, pedal=False, control=cfg.control, plant=cfg.plant)
    teleop = _rebase(trajectory, cfg)
    samples = list(homing)
    last = teleop[-1] if teleop else homing[-1]
    for k in range(sc.teleop_ticks):
        s = teleop[k] if k < len(teleop) else replace(last, pedal=True)
        samples.append(replace(s, t=sc.homing_ticks + k))
    stream = packet_stream(samples, sc.packet_period)
    packets = tuple(encode_packet(p) if p is not None else None for _, p in stream)
    return Session(packets, sc.homing_ticks, sc.total_ticks, trajectory_id)


def _rebase(trajectory: Sequence[TrajectorySample], cfg: SimConfig) -> list[TrajectorySample]:
    if not trajectory:
        return []
    homes = home_positions(cfg.control, cfg.plant)
    first = trajectory[0]
    offsets = []
    for side in range(2):
        h = [round(c * 1e6) for c in homes[side]]
        offsets.append(tuple(h[i] - first.arms[side].position[i] for i in range(3)))
    if all(o == (0, 0, 0) for o in offsets):
        return list(trajectory)
    out = []
    for s in trajectory:
        arms = [a._replace(position=tuple(a.position[i] + offsets[n][i] for i in range(3)))
                for n, a in enumerate(s.arms)]
        out.append(replace(s, left=arms[0], right=arms[1]))
    return out


class SimWorld:
    """One deterministic simulation. ``step()`` runs one 1 ms tick:
    control software, then the PLC, then the plant, then the recorder."""

    def __init__(self, cfg: SimConfig, session: Session, hooks: HookRegistry | None = None,
                 start_tick: int | None = 0, record: bool = True) -> None:
        self.cfg = cfg
        self.session = session
        self.hooks = hooks if hooks is not None else HookRegistry()
        self.plant = Plant(cfg.plant, q0=list(cfg.control.q_rest) * 2)
        self.plc = SafetyPlc(cfg.plc)
        self.control = ControlSoftware(cfg.control, cfg.plant, self.hooks)
        self.start_tick = start_tick
        self.tick = 0
        self.trace = Trace() if record else None
        self.plant_events: list = []
        self._prev_plc = State.E_STOP

    def step(self) -> None:
        t = self.tick
        plant, plc, control, hooks = self.plant, self.plc, self.control, self.hooks
        hooks.fired_mask = 0
        if t == self.start_tick:
            plc.press_start()
        packets = self.session.packets
        packet = packets[t] if t < len(packets) else None
        true_q = list(plant.q)
        true_v = list(plant.v)
        currents, word = control.step(true_q, plc.state, packet, t)
        plc.tick(word, t)
        events = plant.step(currents, plc.brakes_engaged, t)
        if events:
            self.plant_events.extend(events)
        if self.trace is not None:
            ev = control.events
            if events:
                ev = ev + [e.label() for e in events]
            if plc.state == State.E_STOP and plc.estop_cause and self._prev_plc != State.E_STOP:
                ev = ev + [f"PLC_ESTOP:{plc.estop_cause}"]
            pose = control.desired_pose
            ee_l, ee_r = plant.ee
            self.trace.append_flat(
                (int(control.sw_state), int(plc.state), int(control.believed_plc), int(plc.brakes_engaged),
                 int(control.pedal), control.watchdog_bit, control.output_word, control.homing_restarts,
                 hooks.fired_mask),
                (*ee_l, *ee_r, *pose[0], *pose[1], *control.desired_joints, *control.est_q, *control.est_v,
                 *true_q, *true_v, *control.currents, *plant.current), ev)
        self._prev_plc = plc.state
        self.tick = t + 1

    def run(self, ticks: int | None = None) -> "SimWorld":
        n = self.session.total_ticks if ticks is None else ticks
        for _ in range(n):
            self.step()
        return self
