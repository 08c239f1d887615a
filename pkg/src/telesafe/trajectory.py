"""Master-console input: trajectory files, synthetic trajectories, packet streams.

Trajectory file format (UTF-8, whitespace separated, ``#`` starts a comment)::

    t_ms  xL yL zL  qwL qxL qyL qzL  xR yR zR  qwR qxR qyR qzR  graspL graspR  pedal

Positions are absolute micrometers, quaternions are integers in units of
1e-9, grasp is millidegrees and pedal is 0 or 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .codec import IDENTITY_QUAT, ArmPayload, ConsolePacket
from .config import LEFT, RIGHT, ControlConfig, PlantConfig
from .plant import forward_kinematics

N_COLUMNS = 18
WORKSPACE_AMPLITUDE = 0.1


class TrajectoryError(ValueError):
    def __init__(self, code: str, line: int | None = None, detail: str = "") -> None:
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}{where}: {detail}" if detail else f"{code}{where}")
        self.code = code
        self.line = line


class Shape(str, enum.Enum):
    LINE = "LINE"
    CIRCLE = "CIRCLE"


@dataclass(frozen=True)
class TrajectorySample:
    t: int
    left: ArmPayload
    right: ArmPayload
    pedal: bool = True

    @property
    def arms(self) -> tuple[ArmPayload, ArmPayload]:
        return (self.left, self.right)


def parse_trajectory(lines: Iterable[str], period_ms: int = 1) -> list[TrajectorySample]:
    samples: list[TrajectorySample] = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        cols = text.split()
        if len(cols) != N_COLUMNS:
            raise TrajectoryError("PARSE_ERROR", lineno, f"expected {N_COLUMNS} columns, got {len(cols)}")
        try:
            v = [int(c) for c in cols]
        except ValueError as exc:
            raise TrajectoryError("PARSE_ERROR", lineno, str(exc)) from None
        if v[17] not in (0, 1):
            raise TrajectoryError("PARSE_ERROR", lineno, f"pedal must be 0 or 1, got {v[17]}")
        left = ArmPayload(tuple(v[1:4]), tuple(v[4:8]), v[15])
        right = ArmPayload(tuple(v[8:11]), tuple(v[11:15]), v[16])
        if samples and v[0] <= samples[-1].t:
            raise TrajectoryError("NON_MONOTONIC_TIME", lineno, f"t={v[0]} after t={samples[-1].t}")
        if samples and v[0] - samples[-1].t != period_ms:
            raise TrajectoryError("GAP_MISMATCH", lineno,
                                  f"gap {v[0] - samples[-1].t} ms, expected {period_ms} ms")
        samples.append(TrajectorySample(v[0], left, right, bool(v[17])))
    return samples


def load_trajectory(path: str | Path, period_ms: int = 1) -> list[TrajectorySample]:
    with open(path, encoding="utf-8") as fh:
        return parse_trajectory(fh, period_ms)


def format_trajectory(samples: Sequence[TrajectorySample]) -> str:
    out = ["# t_ms xL yL zL qwL qxL qyL qzL xR yR zR qwR qxR qyR qzR graspL graspR pedal"]
    for s in samples:
        cols = [s.t, *s.left.position, *s.left.orientation, *s.right.position, *s.right.orientation,
                s.left.grasp, s.right.grasp, int(s.pedal)]
        out.append(" ".join(str(c) for c in cols))
    return "\n".join(out) + "\n"


def save_trajectory(path: str | Path, samples: Sequence[TrajectorySample]) -> None:
    Path(path).write_text(format_trajectory(samples), encoding="utf-8")


def home_positions(control: ControlConfig | None = None, plant: PlantConfig | None = None):
    control = control or ControlConfig()
    plant = plant or PlantConfig()
    return [forward_kinematics(control.q_home, s, plant)[:3] for s in (LEFT, RIGHT)]


def generate_trajectory(shape: Shape | str, duration_ms: int, amplitude_m: float, period_ms: int = 1,
                        revolutions: int = 1, control: ControlConfig | None = None,
                        plant: PlantConfig | None = None) -> list[TrajectorySample]:
    """Smooth planar path starting (and ending) at the home pose, pedal down.

    CIRCLE runs ``revolutions`` whole turns at constant angular rate; LINE goes
    out along +x by ``amplitude_m`` and back with a raised-cosine profile.
    Samples cover ``t = 0 .. duration_ms`` inclusive.
    """
    shape = Shape(shape.upper() if isinstance(shape, str) else shape)
    if duration_ms <= 0:
        raise TrajectoryError("BAD_DURATION", detail=str(duration_ms))
    if not 0 <= amplitude_m < WORKSPACE_AMPLITUDE:
        raise TrajectoryError("AMPLITUDE_OUT_OF_WORKSPACE", detail=f"{amplitude_m} m")
    homes = home_positions(control, plant)
    samples = []
    for t in range(0, duration_ms + 1, period_ms):
        frac = t / duration_ms
        if shape == Shape.CIRCLE:
            th = 2.0 * math.pi * revolutions * frac
            off = (amplitude_m * (math.cos(th) - 1.0), amplitude_m * math.sin(th), 0.0)
        else:
            off = (amplitude_m * 0.5 * (1.0 - math.cos(2.0 * math.pi * frac)), 0.0, 0.0)
        arms = []
        for home in homes:
            pos = tuple(round((home[i] + off[i]) * 1e6) for i in range(3))
            arms.append(ArmPayload(pos, IDENTITY_QUAT, 0))
        samples.append(TrajectorySample(t, arms[0], arms[1], True))
    return samples


def constant_trajectory(duration_ms: int, pedal: bool = False, period_ms: int = 1,
                        control: ControlConfig | None = None,
                        plant: PlantConfig | None = None) -> list[TrajectorySample]:
    homes = home_positions(control, plant)
    arms = [ArmPayload(tuple(round(c * 1e6) for c in h), IDENTITY_QUAT, 0) for h in homes]
    return [TrajectorySample(t, arms[0], arms[1], pedal) for t in range(0, duration_ms, period_ms)]


def packet_stream(traj: Sequence[TrajectorySample], period_ms: int = 1,
                  start_seq: int = 0) -> list[tuple[int, ConsolePacket | None]]:
    """Per-tick console output for ``traj``: one packet every ``period_ms`` ticks.

    Packet position fields carry the difference from the previously sent
    sample (zero for the first); orientation and grasp are absolute.
    """
    if period_ms < 1:
        raise ValueError("period_ms must be >= 1")
    if not traj:
        return []
    t0 = traj[0].t
    by_tick = {s.t - t0: s for s in traj}
    last_tick = traj[-1].t - t0
    out: list[tuple[int, ConsolePacket | None]] = []
    prev: TrajectorySample | None = None
    seq = start_seq
    for tick in range(last_tick + 1):
        s = by_tick.get(tick)
        if s is None or tick % period_ms:
            out.append((tick, None))
            continue
        arms = []
        for a, arm in enumerate(s.arms):
            if prev is None:
                delta = (0, 0, 0)
            else:
                p = prev.arms[a].position
                delta = tuple(arm.position[i] - p[i] for i in range(3))
            arms.append(ArmPayload(delta, arm.orientation, arm.grasp))
        out.append((tick, ConsolePacket(seq, s.pedal, arms[0], arms[1])))
        seq += 1
        prev = s
    return out
