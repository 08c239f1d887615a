"""Two 4-DOF arms: motor dynamics, brakes, cables, collision geometry.

Each arm has a shoulder and elbow (revolute, planar 2-link), an insertion
stage (prismatic, moves the tool down from the base height) and a tool roll.
Joint state is stored flat, index ``side * 4 + joint``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .config import LEFT, N_JOINTS, RIGHT, TICK_S, PlantConfig


class EventKind(str, enum.Enum):
    CABLE_BREAK = "CABLE_BREAK"
    FLOOR_COLLISION = "FLOOR_COLLISION"
    ARM_ARM_COLLISION = "ARM_ARM_COLLISION"
    JOINT_LIMIT_HIT = "JOINT_LIMIT_HIT"
    NON_FINITE_CURRENT = "NON_FINITE_CURRENT"


@dataclass(frozen=True)
class PlantEvent:
    kind: EventKind
    tick: int
    arm: int | None = None
    joint: int | None = None

    def label(self) -> str:
        parts = [self.kind.value]
        if self.arm is not None:
            parts.append("LR"[self.arm])
        if self.joint is not None:
            parts.append(str(self.joint))
        return ":".join(parts)


@dataclass
class JointState:
    q: float = 0.0
    v: float = 0.0
    applied_current: float = 0.0
    cable_intact: bool = True


@dataclass
class ArmState:
    side: int
    joints: list[JointState] = field(default_factory=lambda: [JointState() for _ in range(N_JOINTS)])

    @property
    def q(self) -> tuple[float, ...]:
        return tuple(j.q for j in self.joints)


def forward_kinematics(q, side: int, cfg: PlantConfig) -> tuple[float, float, float, float]:
    """End-effector (x, y, z, roll) for joint vector ``q`` of arm ``side``."""
    bx, by, bz = cfg.base(side)
    q1, q2, q3, q4 = q[0], q[1], q[2], q[3]
    q12 = q1 + q2
    return (bx + cfg.link1 * math.cos(q1) + cfg.link2 * math.cos(q12),
            by + cfg.link1 * math.sin(q1) + cfg.link2 * math.sin(q12),
            bz - q3,
            q4)


def detect_collisions(ee_left, ee_right, cfg: PlantConfig, tick: int = 0) -> list[PlantEvent]:
    events = []
    for side, ee in ((LEFT, ee_left), (RIGHT, ee_right)):
        if ee[2] < cfg.floor_z:
            events.append(PlantEvent(EventKind.FLOOR_COLLISION, tick, side))
    if math.dist(ee_left[:3], ee_right[:3]) < cfg.arm_proximity:
        events.append(PlantEvent(EventKind.ARM_ARM_COLLISION, tick))
    return events


class Plant:
    """Mutable state of both arms, advanced by :meth:`step` once per tick."""

    def __init__(self, cfg: PlantConfig | None = None, q0=None) -> None:
        self.cfg = cfg or PlantConfig()
        self.q = [0.0] * 8 if q0 is None else [float(x) for x in q0]
        self.v = [0.0] * 8
        self.current = [0.0] * 8
        self.cable = [True] * 8
        self._at_limit = [False] * 8
        self._colliding: set[tuple[EventKind, int | None]] = set()
        self.ee = (forward_kinematics(self.q[0:4], LEFT, self.cfg),
                   forward_kinematics(self.q[4:8], RIGHT, self.cfg))

    def arm(self, side: int) -> ArmState:
        o = side * N_JOINTS
        return ArmState(side, [JointState(self.q[o + j], self.v[o + j], self.current[o + j], self.cable[o + j])
                               for j in range(N_JOINTS)])

    def encoders(self) -> list[float]:
        return list(self.q)

    def step(self, currents, brakes_engaged: bool, tick: int = 0, dt: float = TICK_S) -> list[PlantEvent]:
        """Integrate one tick.

        Free joints: ``tau = kt * i``; ``v += (tau - b v) dt / J``; ``q += v dt``.
        A joint clamped at a hard stop, or a moving joint caught by the
        brakes, loads its cable with the torque needed to stop it inside one
        tick (``J |v| / dt``); any cable load above the break torque snaps it.
        """
        cfg = self.cfg
        kt, inertia, damping = cfg.torque_constant, cfg.inertia, cfg.damping
        tau_break = cfg.cable_break_torque
        q, v, cable = self.q, self.v, self.cable
        if brakes_engaged and not any(v) and all(map(math.isfinite, currents)):
            # held still by the brakes: nothing moves, nothing new to detect
            self.current = list(currents)
            return []
        events: list[PlantEvent] = []
        for k in range(8):
            i = currents[k]
            if not math.isfinite(i):
                events.append(PlantEvent(EventKind.NON_FINITE_CURRENT, tick, k // 4, k % 4))
                i = 0.0
            self.current[k] = i
            if brakes_engaged:
                if v[k] != 0.0:
                    if cable[k] and inertia * abs(v[k]) / dt > tau_break:
                        cable[k] = False
                        events.append(PlantEvent(EventKind.CABLE_BREAK, tick, k // 4, k % 4))
                    v[k] = 0.0
                continue
            tau = 0.0
            if cable[k]:
                tau = kt * i
                if abs(tau) > tau_break:
                    cable[k] = False
                    events.append(PlantEvent(EventKind.CABLE_BREAK, tick, k // 4, k % 4))
                    tau = 0.0
            vk = v[k] + (tau - damping * v[k]) * dt / inertia
            qk = q[k] + vk * dt
            j = k % 4
            lo, hi = cfg.q_min[j], cfg.q_max[j]
            if qk < lo or qk > hi:
                qk = lo if qk < lo else hi
                if not self._at_limit[k]:
                    events.append(PlantEvent(EventKind.JOINT_LIMIT_HIT, tick, k // 4, j))
                    self._at_limit[k] = True
                if cable[k] and inertia * abs(vk) / dt > tau_break:
                    cable[k] = False
                    events.append(PlantEvent(EventKind.CABLE_BREAK, tick, k // 4, j))
                vk = 0.0
            else:
                self._at_limit[k] = qk == lo or qk == hi
            q[k] = qk
            v[k] = vk
        ee_l = forward_kinematics(q[0:4], LEFT, cfg)
        ee_r = forward_kinematics(q[4:8], RIGHT, cfg)
        self.ee = (ee_l, ee_r)
        now = set()
        for ev in detect_collisions(ee_l, ee_r, cfg, tick):
            key = (ev.kind, ev.arm)
            now.add(key)
            if key not in self._colliding:
                events.append(ev)
        self._colliding = now
        return events


def plant_step(plant: Plant, currents, brakes_engaged: bool, dt: float = TICK_S, tick: int = 0):
    """Functional form: advance ``plant`` in place, return ``(plant, events)``."""
    events = plant.step(currents, brakes_engaged, tick, dt)
    return plant, events
