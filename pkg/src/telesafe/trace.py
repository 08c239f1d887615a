"""Per-tick trace storage (column arrays) and CSV export."""

from __future__ import annotations

import hashlib
import io
from array import array
from dataclasses import dataclass

import numpy as np

from .plc import State

TRACE_FORMAT_VERSION = 1

VECTOR_COLUMNS = ("ee", "desired_pose", "desired_joints", "est_q", "est_v",
                  "true_q", "true_v", "sw_current", "plant_current")
SCALAR_COLUMNS = ("sw_state", "plc_state", "believed_plc", "brakes", "pedal_in",
                  "watchdog_bit", "output_word", "homing_restarts", "injected")
N_VEC = 8 * len(VECTOR_COLUMNS)
N_SC = len(SCALAR_COLUMNS)


@dataclass(frozen=True)
class TraceRow:
    tick: int
    sw_state: State
    plc_state: State
    believed_plc_state: State
    brakes: bool
    pedal_in: bool
    watchdog_bit: int
    output_word: int
    homing_restarts: int
    injected: int
    ee: tuple[float, ...]
    desired_pose: tuple[float, ...]
    desired_joints: tuple[float, ...]
    est_q: tuple[float, ...]
    est_v: tuple[float, ...]
    true_q: tuple[float, ...]
    true_v: tuple[float, ...]
    sw_current: tuple[float, ...]
    plant_current: tuple[float, ...]
    events: tuple[str, ...]


class Trace:
    """Column store, one entry per tick starting at tick 0.

    Vector columns hold 8 values per tick (LEFT arm then RIGHT arm; ``ee`` and
    ``desired_pose`` are x, y, z, roll per arm).
    """

    def __init__(self) -> None:
        self._vec = array("d")  # 72 values per tick, VECTOR_COLUMNS order
        self._sc = array("q")  # 9 values per tick, SCALAR_COLUMNS order
        self.events: dict[int, tuple[str, ...]] = {}
        self.n = 0
        self.truncated = False
        self._np: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return self.n

    def col(self, name: str) -> np.ndarray:
        """Numpy copy of a column; vector columns come back shaped (n, 8)."""
        arr = self._np.get(name)
        if arr is None or len(arr) != self.n:
            if name in VECTOR_COLUMNS:
                k = VECTOR_COLUMNS.index(name)
                full = np.frombuffer(self._vec, dtype=np.float64).reshape(self.n, N_VEC)
                arr = full[:, 8 * k:8 * k + 8].copy()
            else:
                k = SCALAR_COLUMNS.index(name)
                full = np.frombuffer(self._sc, dtype=np.int64).reshape(self.n, N_SC)
                arr = full[:, k].copy()
            self._np[name] = arr
        return arr

    def _vector(self, name: str, t: int) -> tuple[float, ...]:
        o = N_VEC * t + 8 * VECTOR_COLUMNS.index(name)
        return tuple(self._vec[o:o + 8])

    def _scalar(self, name: str, t: int) -> int:
        return self._sc[N_SC * t + SCALAR_COLUMNS.index(name)]

    def row(self, t: int) -> TraceRow:
        vec = {name: self._vector(name, t) for name in VECTOR_COLUMNS}
        sc = {name: self._scalar(name, t) for name in SCALAR_COLUMNS}
        return TraceRow(
            tick=t, sw_state=State(sc["sw_state"]), plc_state=State(sc["plc_state"]),
            believed_plc_state=State(sc["believed_plc"]), brakes=bool(sc["brakes"]),
            pedal_in=bool(sc["pedal_in"]), watchdog_bit=sc["watchdog_bit"], output_word=sc["output_word"],
            homing_restarts=sc["homing_restarts"], injected=sc["injected"],
            events=self.events.get(t, ()), **vec)

    def rows(self):
        for t in range(self.n):
            yield self.row(t)

    def append_flat(self, scalars, vectors, events) -> None:
        """Append one tick: 9 scalars and 72 vector values in column order."""
        self._sc.extend(scalars)
        self._vec.extend(vectors)
        if events:
            self.events[self.n] = tuple(events)
        self.n += 1

    def append(self, sw_state, plc_state, believed, brakes, pedal, wd_bit, word, restarts, injected,
               ee, desired_pose, desired_joints, est_q, est_v, true_q, true_v, sw_current, plant_current,
               events) -> None:
        self.append_flat((sw_state, plc_state, believed, brakes, pedal, wd_bit, word, restarts, injected),
                         (*ee, *desired_pose, *desired_joints, *est_q, *est_v, *true_q, *true_v,
                          *sw_current, *plant_current), events)

    def digest(self) -> str:
        """Stable hash of the full trace content."""
        h = hashlib.sha256()
        h.update(self._sc.tobytes())
        h.update(self._vec.tobytes())
        for t in sorted(self.events):
            h.update(f"{t}:{';'.join(self.events[t])}\n".encode())
        return h.hexdigest()[:32]

    def header(self) -> list[str]:
        cols = ["tick", *SCALAR_COLUMNS]
        for name in VECTOR_COLUMNS:
            cols.extend(f"{name}_{i}" for i in range(8))
        cols.append("events")
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# telesafe-trace v{TRACE_FORMAT_VERSION}\n")
        buf.write(",".join(self.header()) + "\n")
        for t in range(self.n):
            parts = [str(t)]
            parts.extend(str(x) for x in self._sc[N_SC * t:N_SC * t + N_SC])
            parts.extend(repr(x) for x in self._vec[N_VEC * t:N_VEC * t + N_VEC])
            parts.append(";".join(self.events.get(t, ())))
            buf.write(",".join(parts) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
