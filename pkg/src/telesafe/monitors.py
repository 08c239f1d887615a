"""Trace analysis: unsafe-control-action monitors, golden-run comparison and
hazard outcome classification.

All functions here are pure over finished traces.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import PlantConfig, SimConfig, Thresholds
from .plc import State
from .trace import Trace

E_STOP, INIT, PEDAL_UP, PEDAL_DOWN = (int(s) for s in State)
XYZ = ([0, 1, 2], [4, 5, 6])


class OutcomeLabel(str, enum.Enum):
    NO_IMPACT = "NO_IMPACT"
    MITIGATED_ESTOP = "MITIGATED_ESTOP"
    H1_POSITION = "H1_POSITION"
    H1_VELOCITY = "H1_VELOCITY"
    H2_STRESS = "H2_STRESS"
    H3_UNAVAILABLE = "H3_UNAVAILABLE"


LABEL_ORDER = list(OutcomeLabel)


def sort_labels(labels) -> list[str]:
    return sorted((OutcomeLabel(x).value for x in labels), key=lambda v: LABEL_ORDER.index(OutcomeLabel(v)))


# Unsafe control actions: id -> (control loop, action, context, hazards)
UCA_CATALOG: dict[str, tuple[str, str, str, str]] = {
    "SW-IK-MISMATCH": ("software", "motor command provided",
                       "desired joints do not realize the desired end-effector pose", "H1-1"),
    "SW-JOINT-JUMP": ("software", "motor command provided",
                      "desired joint position far from the current joint position", "H1-2"),
    "SW-ARM-PROXIMITY": ("software", "motor command provided",
                         "left and right end-effectors closer than the proximity limit", "H2"),
    "SW-STOPPED-PLC-DOWN": ("software", "motor command provided",
                            "software E_STOP or PEDAL_UP while PLC PEDAL_DOWN", "H1 H2"),
    "SW-DOWN-PLC-UP": ("software", "motor command provided",
                       "software PEDAL_DOWN while PLC PEDAL_UP or INIT", "H3"),
    "SW-RUN-PLC-ESTOP": ("software", "motor command provided",
                         "software not E_STOP while PLC E_STOP", "H3"),
    "SW-CMD-NOT-FOLLOWED": ("software", "motor command not followed",
                            "software INIT or PEDAL_DOWN commanding motion against brakes or a broken cable", "H3"),
    "SW-CMD-WHILE-STOPPED": ("software", "motor command provided",
                             "motor current at the plant while software E_STOP or PEDAL_UP", "H1 H2"),
    "SW-UNSAFE-CURRENT": ("software", "motor command provided",
                          "motor current at the plant beyond the soft current limit", "H1 H2"),
    "SW-PROCESS-MODEL": ("software", "motor command provided",
                         "software belief (PLC state, joint estimates) disagrees with the true system", "H1 H2 H3"),
    "HW-BRAKE-WHILE-RUNNING": ("hardware", "brake provided",
                               "stop not pressed and software running (INIT or PEDAL_DOWN)", "H3"),
    "HW-NO-BRAKE-WHILE-STOPPED": ("hardware", "brake not provided",
                                  "software stopped (E_STOP) with brakes released", "H1 H2"),
}

# Contexts that follow state changes of the other controller; a one-tick
# mismatch is inherent to the 1 ms synchronization and is not reported.
_LAGGED = {"SW-STOPPED-PLC-DOWN", "SW-DOWN-PLC-UP", "SW-RUN-PLC-ESTOP",
           "HW-BRAKE-WHILE-RUNNING", "HW-NO-BRAKE-WHILE-STOPPED"}
STATE_MISMATCH_UCAS = ("SW-STOPPED-PLC-DOWN", "SW-DOWN-PLC-UP", "SW-RUN-PLC-ESTOP")


@dataclass(frozen=True)
class UcaRecord:
    uca_id: str
    start: int
    end: int  # inclusive
    context: dict = field(default_factory=dict, compare=False)

    @property
    def ticks(self) -> int:
        return self.end - self.start + 1


def fk_columns(q: np.ndarray, side: int, cfg: PlantConfig) -> np.ndarray:
    """Vectorized forward kinematics: ``q`` is (n, 4); returns (n, 3) positions."""
    bx, by, bz = cfg.base(side)
    q1, q12 = q[:, 0], q[:, 0] + q[:, 1]
    return np.stack([bx + cfg.link1 * np.cos(q1) + cfg.link2 * np.cos(q12),
                     by + cfg.link1 * np.sin(q1) + cfg.link2 * np.sin(q12),
                     bz - q[:, 2]], axis=1)


def _runs(mask: np.ndarray, min_len: int = 1) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (start, end) pairs."""
    if not mask.any():
        return []
    m = np.concatenate(([False], mask, [False])).astype(np.int8)
    d = np.diff(m)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return [(int(s), int(e)) for s, e in zip(starts, ends) if e - s + 1 >= min_len]


def uca_contexts(trace: Trace, cfg: SimConfig | None = None) -> dict[str, np.ndarray]:
    """Per-tick boolean context masks, one per catalog entry."""
    cfg = cfg or SimConfig()
    th, pc = cfg.thresholds, cfg.plant
    n = len(trace)
    sw = trace.col("sw_state")
    plc = trace.col("plc_state")
    believed = trace.col("believed_plc")
    brakes = trace.col("brakes").astype(bool)
    dj = trace.col("desired_joints")
    dpose = trace.col("desired_pose")
    true_q = trace.col("true_q")
    true_v = trace.col("true_v")
    est_q = trace.col("est_q")
    est_v = trace.col("est_v")
    swc = trace.col("sw_current")
    plant_i = trace.col("plant_current")
    ee = trace.col("ee")

    running = (sw == INIT) | (sw == PEDAL_DOWN)
    stopped = (sw == E_STOP) | (sw == PEDAL_UP)
    down = sw == PEDAL_DOWN
    m: dict[str, np.ndarray] = {}

    ik_err = np.zeros(n)
    for side in (0, 1):
        pos = fk_columns(dj[:, 4 * side:4 * side + 4], side, pc)
        err = np.linalg.norm(pos - dpose[:, XYZ[side]], axis=1)
        roll_err = np.abs(dj[:, 4 * side + 3] - dpose[:, 4 * side + 3])
        ik_err = np.maximum(ik_err, np.maximum(err, roll_err))
    m["SW-IK-MISMATCH"] = down & ~(ik_err <= cfg.control.ik_consistency)
    m["SW-JOINT-JUMP"] = running & (np.abs(dj - true_q).max(axis=1) > th.joint_jump)
    dist = np.linalg.norm(ee[:, XYZ[0]] - ee[:, XYZ[1]], axis=1)
    m["SW-ARM-PROXIMITY"] = running & (dist < pc.arm_proximity)
    m["SW-STOPPED-PLC-DOWN"] = stopped & (plc == PEDAL_DOWN)
    m["SW-DOWN-PLC-UP"] = down & ((plc == PEDAL_UP) | (plc == INIT))
    m["SW-RUN-PLC-ESTOP"] = (sw != E_STOP) & (plc == E_STOP)
    commanding = np.abs(swc).max(axis=1) > 0
    cable_broken = _cable_broken_mask(trace)
    m["SW-CMD-NOT-FOLLOWED"] = running & commanding & (brakes | cable_broken)
    plant_active = np.abs(plant_i).max(axis=1) > 0
    m["SW-CMD-WHILE-STOPPED"] = stopped & plant_active
    m["SW-UNSAFE-CURRENT"] = np.abs(plant_i).max(axis=1) > cfg.control.i_soft + th.current_follow_tol
    prev_plc = np.concatenate(([E_STOP], plc[:-1]))
    model_bad = (believed != prev_plc)
    model_bad |= np.abs(est_q - true_q).max(axis=1) > th.estimate_q_tol
    model_bad |= np.abs(est_v - true_v).max(axis=1) > th.estimate_v_tol
    m["SW-PROCESS-MODEL"] = model_bad
    m["HW-BRAKE-WHILE-RUNNING"] = brakes & running
    m["HW-NO-BRAKE-WHILE-STOPPED"] = ~brakes & (sw == E_STOP)
    return m


def _cable_broken_mask(trace: Trace) -> np.ndarray:
    mask = np.zeros(len(trace), dtype=bool)
    first = None
    for t in sorted(trace.events):
        if any(e.startswith("CABLE_BREAK") for e in trace.events[t]):
            first = t
            break
    if first is not None:
        mask[first:] = True
    return mask


def evaluate_uca(trace: Trace, cfg: SimConfig | None = None) -> list[UcaRecord]:
    cfg = cfg or SimConfig()
    lag = cfg.thresholds.sync_lag_ticks
    sw = trace.col("sw_state")
    plc = trace.col("plc_state")
    out = []
    for uca_id, mask in uca_contexts(trace, cfg).items():
        for s, e in _runs(mask, lag + 1 if uca_id in _LAGGED else 1):
            out.append(UcaRecord(uca_id, s, e, {"sw_state": State(int(sw[s])).name,
                                                "plc_state": State(int(plc[s])).name}))
    out.sort(key=lambda r: (r.start, r.uca_id))
    return out


# -- golden comparison ---------------------------------------------------------

@dataclass
class PhaseStats:
    start: int
    end: int  # exclusive
    rms_deviation: float = 0.0
    max_deviation: float = 0.0
    max_step: float = 0.0
    max_speed: float = 0.0
    max_step_deviation: float = 0.0
    max_speed_excess: float = 0.0
    motion: float = 0.0
    golden_motion: float = 0.0
    motion_deficit: float = 0.0
    truncated: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _steps(ee: np.ndarray) -> np.ndarray:
    """Per-tick end-effector displacement vectors, (n, 2, 3); first row zero."""
    pos = np.stack([ee[:, XYZ[0]], ee[:, XYZ[1]]], axis=1)
    d = np.zeros_like(pos)
    d[1:] = pos[1:] - pos[:-1]
    return d


def compare_golden(trace: Trace, golden: Trace, phases: dict[str, tuple[int, int]]) -> dict[str, PhaseStats]:
    """Per-phase end-effector deviation statistics of ``trace`` against ``golden``.

    Length mismatches compare the overlapping prefix and set ``truncated``.
    """
    n = min(len(trace), len(golden))
    truncated = len(trace) != len(golden)
    ee, gee = trace.col("ee")[:n], golden.col("ee")[:n]
    dev = np.maximum(np.linalg.norm(ee[:, XYZ[0]] - gee[:, XYZ[0]], axis=1),
                     np.linalg.norm(ee[:, XYZ[1]] - gee[:, XYZ[1]], axis=1))
    st, gst = _steps(ee), _steps(gee)
    step = np.linalg.norm(st, axis=2)  # (n, 2)
    gstep = np.linalg.norm(gst, axis=2)
    step_dev = np.linalg.norm(st - gst, axis=2).max(axis=1)
    commanded = golden.col("sw_state")[:n] == PEDAL_DOWN
    out = {}
    for name, (a, b) in phases.items():
        b2 = min(b, n)
        s = PhaseStats(a, b, truncated=truncated or b2 < b)
        if b2 > a:
            sl = slice(a, b2)
            cm = commanded[sl]
            s.rms_deviation = float(np.sqrt(np.mean(dev[sl][cm] ** 2))) if cm.any() else 0.0
            s.max_deviation = float(dev[sl].max())
            s.max_step = float(step[sl].max())
            s.max_speed = s.max_step / 0.001
            s.max_step_deviation = float(step_dev[sl].max())
            s.max_speed_excess = float(max(0.0, (step[sl] - gstep[sl]).max())) / 0.001
            s.motion = float(step[sl].sum(axis=0).max())
            s.golden_motion = float(gstep[sl].sum(axis=0).max())
            s.motion_deficit = float(max(0.0, (gstep[sl].sum(axis=0) - step[sl].sum(axis=0)).max()))
        out[name] = s
    return out


# -- classification ------------------------------------------------------------

@dataclass
class PhaseOutcome:
    labels: list[str]
    first_hazard_tick: int | None
    crossings: dict[str, int]
    stats: PhaseStats
    jump_class: str  # "none", "small" or "abrupt"

    def to_dict(self) -> dict:
        return {"labels": self.labels, "first_hazard_tick": self.first_hazard_tick,
                "crossings": self.crossings, "stats": self.stats.to_dict(), "jump_class": self.jump_class}


def _first(mask: np.ndarray, offset: int) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) + offset if len(idx) else None


def _event_ticks(trace: Trace, prefix: str) -> list[int]:
    return sorted(t for t, evs in trace.events.items() if any(e.startswith(prefix) for e in evs))


def homing_complete_tick(trace: Trace) -> int | None:
    ticks = _event_ticks(trace, "HOMING_COMPLETE")
    return ticks[0] if ticks else None


def phase_ranges(cfg: SimConfig) -> dict[str, tuple[int, int]]:
    return {"HOMING": (0, cfg.session.homing_ticks), "TELEOP": (cfg.session.homing_ticks, cfg.session.total_ticks)}


def classify_outcome(trace: Trace, golden: Trace, thresholds: Thresholds | None = None,
                     cfg: SimConfig | None = None,
                     golden_homing_tick: int | None = None) -> dict[str, PhaseOutcome]:
    """Per-phase outcome labels of ``trace`` judged against the fault-free ``golden``."""
    cfg = cfg or SimConfig()
    th = thresholds or cfg.thresholds
    phases = phase_ranges(cfg)
    stats = compare_golden(trace, golden, phases)
    if golden_homing_tick is None:
        golden_homing_tick = homing_complete_tick(golden)
    n = min(len(trace), len(golden))
    ee, gee = trace.col("ee")[:n], golden.col("ee")[:n]
    dev = np.maximum(np.linalg.norm(ee[:, XYZ[0]] - gee[:, XYZ[0]], axis=1),
                     np.linalg.norm(ee[:, XYZ[1]] - gee[:, XYZ[1]], axis=1))
    st, gst = _steps(ee), _steps(gee)
    step_dev = np.linalg.norm(st - gst, axis=2).max(axis=1)
    step = np.linalg.norm(st, axis=2)
    gstep = np.linalg.norm(gst, axis=2)
    commanded = golden.col("sw_state")[:n] == PEDAL_DOWN
    brakes = trace.col("brakes")[:n]
    plc = trace.col("plc_state")[:n]
    sw = trace.col("sw_state")[:n]
    restarts = trace.col("homing_restarts")[:n]
    overdrive = _event_ticks(trace, "OVERDRIVE_ESTOP")
    latch = overdrive[0] if overdrive else None
    stress_events = [t for t, evs in trace.events.items() if t < n and any(
        e.startswith(("CABLE_BREAK", "FLOOR_COLLISION", "ARM_ARM_COLLISION", "JOINT_LIMIT_HIT")) for e in evs)]
    run_home = homing_complete_tick(trace)

    out: dict[str, PhaseOutcome] = {}
    for name, (a, b) in phases.items():
        b2 = min(b, n)
        cross: dict[str, int] = {}
        if b2 > a:
            sl = slice(a, b2)
            # H1: position
            t_jump = _first(step_dev[sl] > th.jump_pos, a)
            cm = commanded[sl]
            sq = np.where(cm, dev[sl] ** 2, 0.0)
            cnt = np.cumsum(cm)
            with np.errstate(invalid="ignore", divide="ignore"):
                running_rms = np.sqrt(np.cumsum(sq) / np.maximum(cnt, 1))
            t_rms = _first(cm & (running_rms > th.deviation_rms), a) \
                if stats[name].rms_deviation > th.deviation_rms else None
            t_h1p = min((t for t in (t_jump, t_rms) if t is not None), default=None)
            if t_h1p is not None:
                cross["H1_POSITION"] = t_h1p
            # H1: velocity
            excess = (step[sl] - gstep[sl]).max(axis=1) / 0.001
            t_v = _first(excess > th.overspeed, a)
            if t_v is not None:
                cross["H1_VELOCITY"] = t_v
            # H2: stress
            h2 = [t for t in stress_events if a <= t < b2]
            engage = np.flatnonzero((brakes[1:] == 1) & (brakes[:-1] == 0)) + 1
            engage = engage[(engage >= a) & (engage < b2)]
            lim = th.brake_cycle_limit
            for k in range(lim, len(engage)):
                if engage[k] - engage[k - lim] < th.brake_cycle_window:
                    h2.append(int(engage[k]))
                    break
            base = int(restarts[a - 1]) if a > 0 else 0
            t_rs = _first(restarts[sl] - base >= th.homing_restart_limit, a)
            if t_rs is not None:
                h2.append(t_rs)
            timeout = None
            if name == "HOMING" and golden_homing_tick is not None:
                timeout = int(th.homing_timeout_factor * golden_homing_tick)
                if (run_home is None or run_home > timeout) and a <= timeout < b2:
                    # hanging in homing with motors energized
                    if sw[timeout] == INIT and brakes[timeout] == 0:
                        h2.append(timeout)
                else:
                    timeout = None
            if h2:
                cross["H2_STRESS"] = min(h2)
            # H3: unavailable
            h3 = []
            if timeout is not None:
                h3.append(timeout)
            estop = plc[sl] == E_STOP
            for s, _ in _runs(estop, th.estop_latch_limit)[:1]:
                h3.append(s + a + th.estop_latch_limit - 1)
            w = th.unresponsive_window
            if b2 - a >= w:
                cs = np.vstack([np.zeros((1, 2)), np.cumsum(step[sl], axis=0)])
                gcs = np.vstack([np.zeros((1, 2)), np.cumsum(gstep[sl], axis=0)])
                win = cs[w:] - cs[:-w]
                gwin = gcs[w:] - gcs[:-w]
                bad = ((gwin >= th.unresponsive_golden_motion) & (win < th.unresponsive_actual_motion)).any(axis=1)
                t_u = _first(bad, a + w - 1)
                if t_u is not None:
                    h3.append(t_u)
            if stats[name].truncated:
                h3.append(b2 - 1)
            if h3:
                cross["H3_UNAVAILABLE"] = min(h3)
        elif stats[name].truncated:
            cross["H3_UNAVAILABLE"] = a

        labels: set[str] = set()
        mitigated = False
        if latch is not None and latch < b:
            early = [t for k, t in cross.items() if k.startswith(("H1", "H2")) and t < latch]
            mitigated = not early
        if mitigated:
            labels.add(OutcomeLabel.MITIGATED_ESTOP.value)
            if "H2_STRESS" in cross:
                labels.add("H2_STRESS")
            cross = {k: v for k, v in cross.items() if k == "H2_STRESS"}
        else:
            labels.update(cross)
        if not labels:
            labels.add(OutcomeLabel.NO_IMPACT.value)
        max_step_dev = float(step_dev[a:b2].max()) if b2 > a else 0.0
        jump_class = "abrupt" if max_step_dev > th.jump_pos else ("small" if max_step_dev > th.small_jump else "none")
        first = min(cross.values()) if cross else (latch if mitigated else None)
        out[name] = PhaseOutcome(sort_labels(labels), first, dict(sorted(cross.items())), stats[name], jump_class)
    return out
