"""Configuration records for every simulator component.

All defaults are pinned by the test suite; change them only together with
the frozen expected values in ``tests/``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

TICK_S = 0.001
LEFT, RIGHT = 0, 1
SIDES = ("LEFT", "RIGHT")
JOINTS = ("shoulder", "elbow", "insertion", "tool_roll")
N_JOINTS = 4
PRISMATIC = 2  # index of the insertion joint


@dataclass(frozen=True)
class PlantConfig:
    link1: float = 0.3
    link2: float = 0.3
    torque_constant: float = 0.05
    inertia: float = 0.01
    damping: float = 0.1
    cable_break_torque: float = 5.0
    floor_z: float = 0.0
    arm_proximity: float = 0.005
    base_left: tuple[float, float, float] = (-0.2, 0.0, 0.3)
    base_right: tuple[float, float, float] = (0.2, 0.0, 0.3)
    q_min: tuple[float, float, float, float] = (-2.5, -2.5, 0.0, float("-inf"))
    q_max: tuple[float, float, float, float] = (2.5, 2.5, 0.25, float("inf"))

    def base(self, side: int) -> tuple[float, float, float]:
        return self.base_left if side == LEFT else self.base_right


@dataclass(frozen=True)
class ControlConfig:
    kp: tuple[float, float, float, float] = (200.0, 200.0, 400.0, 200.0)
    kd: tuple[float, float, float, float] = (5.0, 5.0, 10.0, 5.0)
    i_soft: float = 8.0
    i_hard: float = 10.0
    dac_scale: float = 0.01
    homing_rate: tuple[float, float, float, float] = (0.5, 0.5, 0.1, 0.5)
    homing_tolerance: float = 0.01
    homing_sync_window: int = 500
    q_home: tuple[float, float, float, float] = (0.4, 1.2, 0.20, 0.0)
    q_rest: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    # Tolerances of the IK-consistency check and estimate sanity monitors.
    ik_consistency: float = 1e-6


@dataclass(frozen=True)
class PlcConfig:
    watchdog_timeout: int = 3


@dataclass(frozen=True)
class Thresholds:
    jump_pos: float = 0.005
    small_jump: float = 0.001
    deviation_rms: float = 0.010
    overspeed: float = 0.5
    brake_cycle_limit: int = 10
    brake_cycle_window: int = 5000
    homing_restart_limit: int = 3
    estop_latch_limit: int = 5000
    unresponsive_window: int = 2000
    unresponsive_golden_motion: float = 0.005
    unresponsive_actual_motion: float = 0.0005
    homing_timeout_factor: float = 2.0
    # UCA context thresholds
    joint_jump: float = 0.05
    estimate_q_tol: float = 0.01
    estimate_v_tol: float = 0.5
    current_follow_tol: float = 0.01
    sync_lag_ticks: int = 1


@dataclass(frozen=True)
class SessionConfig:
    homing_ticks: int = 10_000
    teleop_ticks: int = 20_000
    packet_period: int = 1

    @property
    def total_ticks(self) -> int:
        return self.homing_ticks + self.teleop_ticks


@dataclass(frozen=True)
class SimConfig:
    plant: PlantConfig = field(default_factory=PlantConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    plc: PlcConfig = field(default_factory=PlcConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    session: SessionConfig = field(default_factory=SessionConfig)

    def with_control(self, **kw) -> "SimConfig":
        return replace(self, control=replace(self.control, **kw))

    def with_session(self, **kw) -> "SimConfig":
        return replace(self, session=replace(self.session, **kw))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Stable short hash over every configuration value."""
        blob = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj
