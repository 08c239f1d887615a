"""Fault specifications, value sources, triggers and the per-world hook registry.

A hook sits on one named pipeline site and, when its trigger fires, replaces
every element of the site's field with the fault value. Hooks run inline in
the simulated tick, so injection costs no simulated time.
"""

from __future__ import annotations

import enum
import hashlib
import math
import random
from dataclasses import dataclass, field


class Site(str, enum.Enum):
    NETWORK_POSITION = "NETWORK_POSITION"
    NETWORK_ORIENTATION = "NETWORK_ORIENTATION"
    NETWORK_PEDAL = "NETWORK_PEDAL"
    ESTIMATE_POSITION = "ESTIMATE_POSITION"
    ESTIMATE_VELOCITY = "ESTIMATE_VELOCITY"
    TORQUE_TO_DAC = "TORQUE_TO_DAC"
    PUT_USB_CURRENTS = "PUT_USB_CURRENTS"
    GET_USB_PLC_STATE = "GET_USB_PLC_STATE"
    GET_USB_ENCODERS = "GET_USB_ENCODERS"
    ATMEL_OUTPUT_WORD = "ATMEL_OUTPUT_WORD"


SITE_BITS = {site: 1 << n for n, site in enumerate(Site)}


class Kind(str, enum.Enum):
    STUCK_AT = "STUCK_AT"
    INTERMITTENT = "INTERMITTENT"


class Phase(str, enum.Enum):
    HOMING = "HOMING"
    TELEOP = "TELEOP"
    ALWAYS = "ALWAYS"


class InjectionError(ValueError):
    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class FieldMeta:
    """Valid range of a site's field: ``|x| <= bound`` (or ``0 <= x <= bound``
    for unsigned fields). ``integer`` fields take integral fault values."""

    bound: float
    integer: bool = False
    signed: bool = True

    def is_valid(self, x: float) -> bool:
        if not math.isfinite(x):
            return False
        if self.signed:
            return abs(x) <= self.bound
        return 0 <= x <= self.bound


FIELD_META: dict[Site, FieldMeta] = {
    Site.NETWORK_POSITION: FieldMeta(0.6),
    Site.NETWORK_ORIENTATION: FieldMeta(1.0),
    Site.NETWORK_PEDAL: FieldMeta(1, integer=True, signed=False),
    Site.ESTIMATE_POSITION: FieldMeta(2.5),
    Site.ESTIMATE_VELOCITY: FieldMeta(10.0),
    Site.TORQUE_TO_DAC: FieldMeta(1000, integer=True),
    Site.PUT_USB_CURRENTS: FieldMeta(1000, integer=True),
    Site.GET_USB_PLC_STATE: FieldMeta(3, integer=True, signed=False),
    Site.GET_USB_ENCODERS: FieldMeta(2.5),
    Site.ATMEL_OUTPUT_WORD: FieldMeta(15, integer=True, signed=False),
}


def sample_out_of_range(meta: FieldMeta | None, rng: random.Random) -> float:
    """Seeded value outside ``meta``'s range, magnitude in [1.5, 10] x bound."""
    if meta is None:
        raise InjectionError("NO_RANGE_DECLARED")
    lo, hi = 1.5 * meta.bound, 10.0 * meta.bound
    if meta.integer:
        if not meta.signed and meta.bound == 1:
            return rng.randint(2, 255)
        mag = rng.randint(math.floor(lo) + 1, math.floor(hi))
    else:
        mag = rng.uniform(lo, hi)
    if meta.signed and rng.random() < 0.5:
        return -mag
    return mag


def sample_random(meta: FieldMeta, rng: random.Random, lo: float | None = None,
                  hi: float | None = None) -> float:
    if lo is None:
        lo = -meta.bound if meta.signed else 0
    if hi is None:
        hi = meta.bound
    if meta.integer:
        return rng.randint(math.ceil(lo), math.floor(hi))
    return rng.uniform(lo, hi)


@dataclass(frozen=True)
class ValueSource:
    """``LITERAL`` (number), ``OUT_OF_RANGE`` or ``RANDOM`` (optional lo/hi)."""

    kind: str
    number: float | None = None
    lo: float | None = None
    hi: float | None = None

    def resolve(self, site: Site, rng: random.Random) -> float:
        if self.kind == "LITERAL":
            return self.number
        meta = FIELD_META.get(site)
        if self.kind == "OUT_OF_RANGE":
            return sample_out_of_range(meta, rng)
        if self.kind == "RANDOM":
            if meta is None:
                raise InjectionError("NO_RANGE_DECLARED", site.value)
            return sample_random(meta, rng, self.lo, self.hi)
        raise InjectionError("BAD_VALUE", self.kind)

    def text(self) -> str:
        if self.kind == "LITERAL":
            return _num(self.number)
        if self.kind == "RANDOM" and self.lo is not None:
            return f"random {_num(self.lo)} {_num(self.hi)}"
        return self.kind.lower()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class Trigger:
    phase: Phase = Phase.ALWAYS
    start: int = 0
    end: int | None = None

    def __post_init__(self) -> None:
        if self.end is not None and self.end < self.start:
            raise InjectionError("BAD_TRIGGER", f"start {self.start} > end {self.end}")


@dataclass(frozen=True)
class FaultSpec:
    site: Site
    kind: Kind = Kind.STUCK_AT
    value: ValueSource = field(default_factory=lambda: ValueSource("LITERAL", 0))
    trigger: Trigger = field(default_factory=Trigger)
    period: int = 1

    def __post_init__(self) -> None:
        if self.period < 1:
            raise InjectionError("BAD_PERIOD", str(self.period))


def phase_window(trigger: Trigger, homing_ticks: int, total_ticks: int) -> tuple[int, int]:
    """Absolute ``[first, last]`` tick range a trigger may fire in.

    ``start``/``end`` are offsets from the beginning of the trigger's phase.
    """
    if trigger.phase == Phase.HOMING:
        base, limit = 0, homing_ticks - 1
    elif trigger.phase == Phase.TELEOP:
        base, limit = homing_ticks, total_ticks - 1
    else:
        base, limit = 0, total_ticks - 1
    first = base + trigger.start
    last = limit if trigger.end is None else min(limit, base + trigger.end)
    return first, last


def apply_fault(original, tick: int, spec: FaultSpec, value: float, window: tuple[int, int]):
    """Return the (possibly replaced) field value for ``tick``.

    Sequences are replaced element-wise; scalars directly.
    """
    first, last = window
    if tick < first or tick > last:
        return original
    if spec.kind == Kind.INTERMITTENT and (tick - first) % spec.period:
        return original
    if isinstance(original, (list, tuple)):
        return [value] * len(original)
    return value


def stable_seed(*parts) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


class Interceptor:
    __slots__ = ("spec", "value", "first", "last", "period", "intermittent")

    def __init__(self, spec: FaultSpec, value: float, window: tuple[int, int]) -> None:
        self.spec = spec
        self.value = value
        self.first, self.last = window
        self.period = spec.period
        self.intermittent = spec.kind == Kind.INTERMITTENT

    def fires(self, tick: int) -> bool:
        if tick < self.first or tick > self.last:
            return False
        return not (self.intermittent and (tick - self.first) % self.period)


class HookRegistry:
    """Site -> interceptor map for one world. Records which sites fired per tick."""

    def __init__(self) -> None:
        self.hooks: dict[Site, Interceptor] = {}
        self.fired_mask = 0

    def __bool__(self) -> bool:
        return bool(self.hooks)

    def __len__(self) -> int:
        return len(self.hooks)

    def __contains__(self, site: Site) -> bool:
        return site in self.hooks

    def install(self, spec: FaultSpec, value: float, window: tuple[int, int]) -> None:
        if spec.site in self.hooks:
            raise InjectionError("DUPLICATE_SITE", spec.site.value)
        self.hooks[spec.site] = Interceptor(spec, value, window)

    def apply(self, site: Site, original, tick: int):
        hook = self.hooks.get(site)
        if hook is None or not hook.fires(tick):
            return original
        self.fired_mask |= SITE_BITS[site]
        if isinstance(original, (list, tuple)):
            return [hook.value] * len(original)
        return hook.value


def arm_faults(specs, seed: int, homing_ticks: int, total_ticks: int) -> HookRegistry:
    """Build a registry for ``specs``; value sources are seeded per site from ``seed``."""
    registry = HookRegistry()
    for spec in specs:
        rng = random.Random(stable_seed(seed, spec.site.value))
        value = spec.value.resolve(spec.site, rng)
        registry.install(spec, value, phase_window(spec.trigger, homing_ticks, total_ticks))
    return registry
