"""Checkpoint schedules n_1 < n_2 < ... and the matching normalizers.

Logarithms are natural throughout.  ``[x]`` in the source formulas is the
integer part, so raw terms are floored unless ``parity`` is ``EVEN``, in which
case the period-2 variant ``2 * ceil(t)`` is used.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

from recurlab.errors import InvalidCount, InvalidSpec, NonMonotoneSchedule

MAX_TERM = 2**62   # walks index steps with int64


class ScheduleKind(str, enum.Enum):
    ITER_LOG_ITER = "iterlog"      # i log i
    POWER_LAW = "power"            # i^beta
    POWER_LOG_POWER = "powerlog"   # (i log i)^beta
    GEOMETRIC = "geometric"        # ratio^i
    EXPLICIT = "explicit"


class Parity(str, enum.Enum):
    NONE = "none"
    EVEN = "even"


class NormalizerKind(str, enum.Enum):
    LOG_COUNT = "log"
    LOG_LOG_COUNT = "loglog"
    COUNT = "count"
    HARMONIC_LOG = "harmonic"


_DEFAULT_NORMALIZER = {
    ScheduleKind.ITER_LOG_ITER: NormalizerKind.LOG_LOG_COUNT,
    ScheduleKind.POWER_LAW: NormalizerKind.LOG_COUNT,
    ScheduleKind.POWER_LOG_POWER: NormalizerKind.LOG_LOG_COUNT,
    ScheduleKind.GEOMETRIC: NormalizerKind.COUNT,
    ScheduleKind.EXPLICIT: NormalizerKind.COUNT,
}


@dataclass(frozen=True)
class ScheduleSpec:
    kind: ScheduleKind
    count: int = 0
    beta: float | None = None
    ratio: float | None = None
    explicit_terms: tuple[int, ...] = ()
    start_index: int = 2
    parity: Parity = Parity.NONE

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        object.__setattr__(self, "parity", Parity(self.parity))
        object.__setattr__(self, "explicit_terms", tuple(int(t) for t in self.explicit_terms))
        if self.kind is ScheduleKind.EXPLICIT and self.count == 0:
            object.__setattr__(self, "count", len(self.explicit_terms))
        self.validate()

    def validate(self):
        if int(self.count) != self.count or self.count < 1:
            raise InvalidSpec(f"count must be a positive integer, got {self.count!r}")
        if self.start_index < 2:
            raise InvalidSpec(f"start_index must be >= 2, got {self.start_index}")
        if self.kind in (ScheduleKind.POWER_LAW, ScheduleKind.POWER_LOG_POWER):
            if self.beta is None or not self.beta >= 2:
                raise InvalidSpec(f"{self.kind.value} schedule requires beta >= 2, got {self.beta}")
        if self.kind is ScheduleKind.GEOMETRIC:
            if self.ratio is None or not self.ratio > 1:
                raise InvalidSpec(f"geometric schedule requires ratio > 1, got {self.ratio}")
        if self.kind is ScheduleKind.EXPLICIT:
            if len(self.explicit_terms) != self.count:
                raise InvalidSpec("explicit schedule: count must equal the number of terms")
            if any(t < 1 for t in self.explicit_terms):
                raise InvalidSpec("explicit schedule terms must be positive integers")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "count": self.count, "start_index": self.start_index,
             "parity": self.parity.value}
        if self.beta is not None:
            d["beta"] = self.beta
        if self.ratio is not None:
            d["ratio"] = self.ratio
        if self.explicit_terms:
            d["explicit_terms"] = list(self.explicit_terms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        return cls(kind=d["kind"], count=int(d.get("count", 0)), beta=d.get("beta"),
                   ratio=d.get("ratio"), explicit_terms=tuple(d.get("explicit_terms", ())),
                   start_index=int(d.get("start_index", 2)), parity=d.get("parity", "none"))


@dataclass(frozen=True)
class Schedule:
    terms: tuple[int, ...]
    spec: ScheduleSpec
    normalizer_kind: NormalizerKind
    indices: tuple[int, ...] = field(default=())

    def __len__(self):
        return len(self.terms)

    @property
    def n_last(self) -> int:
        return self.terms[-1]

    @property
    def count(self) -> int:
        return len(self.terms)

    def normalizer(self) -> float:
        return normalizer_value(self.normalizer_kind, self.count)

    def to_json(self) -> str:
        return json.dumps({
            "schema": "recurlab.schedule/1",
            "spec": self.spec.to_dict(),
            "normalizer_kind": self.normalizer_kind.value,
            "terms": list(self.terms),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        d = json.loads(text)
        sched = build_schedule(ScheduleSpec.from_dict(d["spec"]))
        if list(sched.terms) != d["terms"]:
            raise InvalidSpec("schedule terms do not match their spec header")
        return Schedule(sched.terms, sched.spec, NormalizerKind(d["normalizer_kind"]), sched.indices)


def _raw_term(spec: ScheduleSpec, i: int):
    """The real-valued t_i before integer rounding (exact ints where possible)."""
    if spec.kind is ScheduleKind.ITER_LOG_ITER:
        return i * math.log(i)
    if spec.kind is ScheduleKind.POWER_LAW:
        if float(spec.beta).is_integer():
            return i ** int(spec.beta)
        return i ** spec.beta
    if spec.kind is ScheduleKind.POWER_LOG_POWER:
        return (i * math.log(i)) ** spec.beta
    if spec.kind is ScheduleKind.GEOMETRIC:
        if float(spec.ratio).is_integer():
            return int(spec.ratio) ** i
        return spec.ratio ** i
    raise AssertionError(spec.kind)


def build_schedule(spec: ScheduleSpec) -> Schedule:
    """Generate the checkpoint terms for ``spec``.

    Raises NonMonotoneSchedule if two consecutive terms fail to increase
    strictly; duplicates are never dropped silently.
    """
    if spec.kind is ScheduleKind.EXPLICIT:
        terms = list(spec.explicit_terms)
        indices = list(range(1, len(terms) + 1))
    else:
        indices = list(range(spec.start_index, spec.start_index + spec.count))
        terms = []
        for i in indices:
            try:
                t = _raw_term(spec, i)
            except OverflowError:
                t = math.inf
            if not t <= MAX_TERM:
                raise InvalidSpec(f"term at i = {i} exceeds the step-count limit 2^62; reduce count")
            if spec.parity is Parity.EVEN:
                terms.append(2 * math.ceil(t))
            else:
                terms.append(math.floor(t))
    if spec.kind is ScheduleKind.EXPLICIT and spec.parity is Parity.EVEN:
        if any(t % 2 for t in terms):
            raise InvalidSpec("explicit schedule with even parity contains odd terms")
    for k in range(1, len(terms)):
        if terms[k] <= terms[k - 1]:
            raise NonMonotoneSchedule(
                f"terms[{k - 1}] = {terms[k - 1]} >= terms[{k}] = {terms[k]}")
    if terms[0] < 1:
        raise InvalidSpec(f"first term {terms[0]} is not a positive integer")
    if terms[-1] > MAX_TERM:
        raise InvalidSpec(f"last term {terms[-1]} exceeds the step-count limit 2^62")
    return Schedule(tuple(int(t) for t in terms), spec, _DEFAULT_NORMALIZER[spec.kind], tuple(indices))


def validate_growth(schedule: Schedule, A: float, alpha: float) -> bool:
    """Check n_{i+1}/n_i >= 1 + A i^{-alpha} at every consecutive pair.

    ``i`` is the schedule's own generating index (``start_index`` onward; 1-based
    position for explicit schedules), i.e. the schedule is treated as the tail
    of a sequence that starts at i = 1.
    """
    idx = schedule.indices or tuple(range(1, len(schedule) + 1))
    t = schedule.terms
    for k in range(len(t) - 1):
        i = idx[k]
        # left side is an exact integer; 1e-12 relative slack absorbs rounding at equality
        if t[k + 1] - t[k] < A * t[k] * i ** (-alpha) * (1 - 1e-12):
            return False
    return True


def normalizer_value(kind: NormalizerKind | str, count: int) -> float:
    kind = NormalizerKind(kind)
    if kind is NormalizerKind.COUNT:
        v = float(count)
    elif kind in (NormalizerKind.LOG_COUNT, NormalizerKind.HARMONIC_LOG):
        v = math.log(count) if count > 0 else 0.0
    else:
        v = math.log(math.log(count)) if count > 1 else 0.0
    if not v > 0:
        raise InvalidCount(f"{kind.value} normalizer is not positive at count={count}")
    return v


def beta_for_alpha(alpha: float, dimension: int) -> float:
    """Schedule exponent tied to the window exponent alpha (d = 1: power law, d = 2: power-log)."""
    if dimension == 1:
        if not (1 / 6 <= alpha < 1 / 2):
            raise InvalidSpec(f"alpha must lie in [1/6, 1/2) for d = 1, got {alpha}")
        return 1.0 / (0.5 - alpha)
    if dimension == 2:
        if not (2 / 5 <= alpha < 1 / 2):
            raise InvalidSpec(f"alpha must lie in [2/5, 1/2) for d = 2, got {alpha}")
        return 0.5 / (0.5 - alpha)
    raise InvalidSpec(f"window schedules exist only for d = 1, 2 (got d = {dimension})")
