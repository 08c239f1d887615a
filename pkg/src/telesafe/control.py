"""Robot control software: network ingestion, the 1 ms control pipeline,
the four-state machine, homing, overdrive detection and watchdog emission.

Each pipeline stage that is a fault-injection site passes its output through
``self.hooks`` before the next stage sees it.
"""

from __future__ import annotations

import functools
import math

from .codec import PacketError, decode_packet
from .config import LEFT, N_JOINTS, RIGHT, TICK_S, ControlConfig, PlantConfig
from .injection import HookRegistry, Site
from .plant import forward_kinematics
from .plc import BIT_HOMED, BIT_INIT_REQUEST, BIT_PEDAL, BIT_WATCHDOG, State

_RUN_STATES = (State.INIT, State.PEDAL_DOWN)
_EMPTY_HOOKS = HookRegistry()
# decoding is pure and sessions replay identical bytes across runs
_decode = functools.lru_cache(maxsize=1 << 16)(decode_packet)


class IKFailure(ValueError):
    pass


def inverse_kinematics(pose, side: int, cfg: PlantConfig) -> tuple[float, float, float, float]:
    """Joint vector reaching ``pose = (x, y, z, roll)``, elbow-up branch (q2 >= 0).

    Raises :class:`IKFailure` for unreachable radii and out-of-limit solutions.
    """
    bx, by, bz = cfg.base(side)
    x, y, z, roll = pose
    dx, dy = x - bx, y - by
    l1, l2 = cfg.link1, cfg.link2
    r2 = dx * dx + dy * dy
    if not math.isfinite(r2) or r2 > (l1 + l2) ** 2 or r2 < (l1 - l2) ** 2:
        raise IKFailure(f"radius {math.sqrt(r2) if math.isfinite(r2) else r2} unreachable")
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    c2 = 1.0 if c2 > 1.0 else (-1.0 if c2 < -1.0 else c2)
    q2 = math.acos(c2)
    q1 = math.atan2(dy, dx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    if q1 <= -math.pi:
        q1 += 2.0 * math.pi
    elif q1 > math.pi:
        q1 -= 2.0 * math.pi
    q3 = bz - z
    q = (q1, q2, q3, roll)
    for j in range(3):
        if not cfg.q_min[j] <= q[j] <= cfg.q_max[j]:
            raise IKFailure(f"joint {j} = {q[j]:.4f} outside limits")
    if not math.isfinite(roll):
        raise IKFailure("roll not finite")
    return q


def roll_from_quaternion(w: float, x: float, y: float, z: float) -> float:
    return 2.0 * math.atan2(z, w)


def pd_control(desired, est_q, est_v, cfg: ControlConfig, sw_state: State = State.PEDAL_DOWN) -> list[float]:
    """``i = Kp (q_des - q_hat) - Kd v_hat`` per joint; zero outside INIT/PEDAL_DOWN."""
    if sw_state not in _RUN_STATES:
        return [0.0] * len(desired)
    kp, kd = cfg.kp, cfg.kd
    return [kp[k % 4] * (desired[k] - est_q[k]) - kd[k % 4] * est_v[k] for k in range(len(desired))]


def overdrive_detect(currents, cfg: ControlConfig) -> tuple[list[float], bool]:
    """Clamp to +-I_SOFT; any |i| > I_HARD requests an E-STOP and zeroes output."""
    hard, soft = cfg.i_hard, cfg.i_soft
    out = []
    for i in currents:
        if not abs(i) <= hard:  # also catches NaN
            return [0.0] * len(currents), True
        out.append(soft if i > soft else (-soft if i < -soft else i))
    return out, False


def torque_to_dac(currents, cfg: ControlConfig) -> list[int]:
    scale = cfg.dac_scale
    return [round(i / scale) for i in currents]


def sync_state_machine(sw_state: State, believed: State, pedal: bool) -> State:
    """Follow the PLC: E-STOP and INIT from the PLC override the software;
    pedal transitions only once the PLC is past INIT."""
    if believed == State.E_STOP:
        return State.E_STOP
    if sw_state == State.E_STOP:
        return State.INIT if believed == State.INIT else State.E_STOP
    if believed == State.INIT:
        return State.INIT
    if sw_state == State.PEDAL_UP and pedal:
        return State.PEDAL_DOWN
    if sw_state == State.PEDAL_DOWN and not pedal:
        return State.PEDAL_UP
    return sw_state


class ControlSoftware:
    def __init__(self, cfg: ControlConfig | None = None, plant_cfg: PlantConfig | None = None,
                 hooks: HookRegistry | None = None) -> None:
        self.cfg = cfg or ControlConfig()
        self.plant_cfg = plant_cfg or PlantConfig()
        self.hooks = hooks if hooks is not None else _EMPTY_HOOKS
        self.sw_state = State.E_STOP
        self.believed_plc = State.E_STOP
        self.home_pose = [forward_kinematics(self.cfg.q_home, s, self.plant_cfg) for s in (LEFT, RIGHT)]
        self.desired_pose = [list(p) for p in self.home_pose]
        self.desired_joints = [0.0] * 8
        self.est_q = [0.0] * 8
        self.est_v = [0.0] * 8
        self._prev_enc: list[float] | None = None
        self.last_seq = -1
        self.pedal = False
        self.watchdog_bit = 0
        self.watchdog_enabled = True
        self.currents = [0.0] * 8
        self.dac = [0] * 8
        self.output_word = 0
        # homing
        self.homing_started = False
        self.homing_stage = "home"
        self.homed_tick: list[int | None] = [None, None]
        self.homing_restarts = 0
        self.homing_complete_tick: int | None = None
        self._ramp = [0.0] * 8
        self.events: list[str] = []
        self.estop_cause: str | None = None

    # -- USB in ---------------------------------------------------------------
    def get_usb_packet(self, encoders, plc_state: State, tick: int) -> tuple[list[float], State]:
        hooks = self.hooks
        if hooks:
            encoders = hooks.apply(Site.GET_USB_ENCODERS, encoders, tick)
            raw = hooks.apply(Site.GET_USB_PLC_STATE, int(plc_state), tick)
            try:
                plc_state = State(int(raw))
            except (ValueError, OverflowError):
                plc_state = State.E_STOP  # unknown code read as E-STOP
        self.believed_plc = plc_state
        return encoders, plc_state

    def state_estimate(self, encoders, tick: int) -> None:
        prev = self._prev_enc
        q = list(encoders)
        if prev is None:
            v = [0.0] * 8
        else:
            v = [(q[k] - prev[k]) / TICK_S for k in range(8)]
        self._prev_enc = q
        if self.hooks:
            q = self.hooks.apply(Site.ESTIMATE_POSITION, q, tick)
            v = self.hooks.apply(Site.ESTIMATE_VELOCITY, v, tick)
        self.est_q = q
        self.est_v = v

    # -- state machine --------------------------------------------------------
    def sync(self, tick: int) -> None:
        old = self.sw_state
        new = sync_state_machine(old, self.believed_plc, self.pedal)
        if new == old:
            return
        if new == State.E_STOP:
            self.estop_cause = "plc"
            self.events.append("SW_ESTOP_PLC")
            if old == State.INIT:
                self.homing_restarts += 1
                self.events.append("HOMING_RESTART")
        elif new == State.INIT:
            if old != State.E_STOP:
                self.homing_restarts += 1
                self.events.append("HOMING_RESTART")
            self._begin_homing(restart=self.homing_started)
        self.sw_state = new

    def _begin_homing(self, restart: bool) -> None:
        self._ramp = list(self.est_q)
        self.homing_stage = "retract" if restart else "home"
        self.homed_tick = [None, None]
        self.homing_started = True

    # -- network --------------------------------------------------------------
    def network_process(self, data: bytes | None, tick: int) -> None:
        if data is None:
            return
        try:
            pkt = _decode(data)
        except PacketError as exc:
            self.events.append(f"DECODE_ERROR:{exc.code}")
            return
        if pkt.sequence <= self.last_seq:
            self.events.append("STALE_PACKET")
            return
        self.last_seq = pkt.sequence
        deltas = [c * 1e-6 for arm in pkt.arms for c in arm.position]
        quats = [c * 1e-9 for arm in pkt.arms for c in arm.orientation]
        pedal = 1 if pkt.pedal else 0
        if self.hooks:
            deltas = self.hooks.apply(Site.NETWORK_POSITION, deltas, tick)
            quats = self.hooks.apply(Site.NETWORK_ORIENTATION, quats, tick)
            pedal = self.hooks.apply(Site.NETWORK_PEDAL, pedal, tick)
        self.pedal = bool(pedal)
        if self.sw_state != State.PEDAL_DOWN:
            return
        for s in (LEFT, RIGHT):
            pose = self.desired_pose[s]
            pose[0] += deltas[3 * s]
            pose[1] += deltas[3 * s + 1]
            pose[2] += deltas[3 * s + 2]
            w, x, y, z = quats[4 * s:4 * s + 4]
            pose[3] = roll_from_quaternion(w, x, y, z)

    # -- trajectory generation -------------------------------------------------
    def homing_step(self, tick: int) -> None:
        cfg = self.cfg
        eps = cfg.homing_tolerance
        target = cfg.q_rest if self.homing_stage == "retract" else cfg.q_home
        ramp = self._ramp
        reached = True
        for k in range(8):
            j = k % 4
            step = cfg.homing_rate[j] * TICK_S
            d = target[j] - ramp[k]
            if d > step:
                ramp[k] += step
                reached = False
            elif d < -step:
                ramp[k] -= step
                reached = False
            else:
                ramp[k] = target[j]
        self.desired_joints = list(ramp)
        est = self.est_q
        if self.homing_stage == "retract":
            if reached and all(abs(est[k] - target[k % 4]) < eps for k in range(8)):
                self.homing_stage = "home"
            return
        for s in (LEFT, RIGHT):
            if self.homed_tick[s] is None:
                o = s * N_JOINTS
                if all(ramp[o + j] == target[j] and abs(est[o + j] - target[j]) < eps for j in range(N_JOINTS)):
                    self.homed_tick[s] = tick
        a, b = self.homed_tick
        window = cfg.homing_sync_window
        if a is not None and b is not None:
            if abs(a - b) <= window:
                self.sw_state = State.PEDAL_UP
                self.homing_complete_tick = tick
                self.desired_pose = [list(p) for p in self.home_pose]
                self.events.append("HOMING_COMPLETE")
                return
        done = a if a is not None else b
        if done is not None and (a is None or b is None) and tick - done > window:
            self.homing_restarts += 1
            self.events.append("SYNC_FAILURE")
            self.events.append("HOMING_RESTART")
            self._begin_homing(restart=True)

    def teleop_ik(self, tick: int) -> None:
        joints = self.desired_joints
        for s in (LEFT, RIGHT):
            try:
                q = inverse_kinematics(self.desired_pose[s], s, self.plant_cfg)
            except IKFailure:
                self.events.append(f"IK_FAILURE:{'LR'[s]}")
                continue
            o = s * N_JOINTS
            joints[o:o + N_JOINTS] = q

    # -- USB out ----------------------------------------------------------------
    def command_currents(self, tick: int) -> list[float]:
        """pd_control -> overdrive_detect -> torque_to_dac -> put_usb_packet.

        Returns the currents framed for the motor bus (amperes).
        """
        cfg = self.cfg
        raw = pd_control(self.desired_joints, self.est_q, self.est_v, cfg, self.sw_state)
        out, estop = overdrive_detect(raw, cfg)
        if estop:
            self.sw_state = State.E_STOP
            self.watchdog_enabled = False
            self.estop_cause = "overdrive"
            self.events.append("OVERDRIVE_ESTOP")
        self.currents = out
        words = torque_to_dac(out, cfg)
        if self.hooks:
            words = self.hooks.apply(Site.TORQUE_TO_DAC, words, tick)
            words = self.hooks.apply(Site.PUT_USB_CURRENTS, list(words), tick)
        self.dac = words
        scale = cfg.dac_scale
        return [w * scale for w in words]

    def update_atmel_outputs(self, tick: int) -> int:
        if self.watchdog_enabled:
            self.watchdog_bit ^= 1
        s = self.sw_state
        word = self.watchdog_bit * BIT_WATCHDOG
        if s == State.PEDAL_DOWN:
            word |= BIT_PEDAL
        elif s == State.INIT:
            word |= BIT_INIT_REQUEST
        if s in (State.PEDAL_UP, State.PEDAL_DOWN):
            word |= BIT_HOMED
        if self.hooks:
            word = self.hooks.apply(Site.ATMEL_OUTPUT_WORD, word, tick)
            word = int(word)
        self.output_word = word
        return word

    def step(self, encoders, plc_state: State, packet: bytes | None, tick: int) -> tuple[list[float], int]:
        """One control-thread cycle. Returns (motor-bus currents, PLC output word)."""
        self.events = []
        enc, _ = self.get_usb_packet(encoders, plc_state, tick)
        self.state_estimate(enc, tick)
        self.sync(tick)
        self.network_process(packet, tick)
        if self.sw_state == State.INIT:
            self.homing_step(tick)
        elif self.sw_state == State.PEDAL_DOWN:
            self.teleop_ik(tick)
        currents = self.command_currents(tick)
        word = self.update_atmel_outputs(tick)
        return currents, word
