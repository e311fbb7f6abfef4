"""Device description: configuration, per-mode photon weights and timing limits."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DetectorConfig:
    """Fibre-loop time-multiplexed detector with ``stages`` delay stages.

    Stage ``s`` has a short arm and a long arm of length ``2**s`` base lengths.
    ``coupler_ratios`` gives the fraction sent into the short arm at each stage
    coupler; an optional extra entry sets the split of the final output coupler
    between the two detectors (default 0.5).
    """

    stages: int
    coupler_ratios: tuple[float, ...] | None = None
    fiber_transmission: float = 1.0
    detector_efficiency: float = 1.0
    base_delay_ns: float = 125.0
    deadtime_ns: float = 0.0

    def __post_init__(self):
        if not isinstance(self.stages, (int, np.integer)) or self.stages < 1:
            raise ValueError(f"stages must be a positive integer, got {self.stages!r}")
        ratios = self.coupler_ratios
        if ratios is None:
            ratios = (0.5,) * self.stages
        ratios = tuple(float(r) for r in ratios)
        if len(ratios) not in (self.stages, self.stages + 1):
            raise ValueError(
                f"coupler_ratios needs {self.stages} or {self.stages + 1} entries, got {len(ratios)}"
            )
        if any(not 0.0 <= r <= 1.0 for r in ratios):
            raise ValueError("coupler_ratios must lie in [0, 1]")
        object.__setattr__(self, "coupler_ratios", ratios)
        if not 0.0 < self.fiber_transmission <= 1.0:
            raise ValueError("fiber_transmission must lie in (0, 1]")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must lie in [0, 1]")
        if not self.base_delay_ns > 0:
            raise ValueError("base_delay_ns must be positive")
        if self.deadtime_ns < 0:
            raise ValueError("deadtime_ns must be >= 0")
        if self.base_delay_ns <= self.deadtime_ns:
            warnings.warn(
                f"base delay {self.base_delay_ns} ns does not exceed detector deadtime "
                f"{self.deadtime_ns} ns",
                stacklevel=3,
            )

    @property
    def modes(self) -> int:
        return 2 ** (self.stages + 1)

    @property
    def output_split(self) -> float:
        return self.coupler_ratios[self.stages] if len(self.coupler_ratios) > self.stages else 0.5

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "stages": int(self.stages),
            "coupler_ratios": list(self.coupler_ratios),
            "fiber_transmission": self.fiber_transmission,
            "detector_efficiency": self.detector_efficiency,
            "base_delay_ns": self.base_delay_ns,
            "deadtime_ns": self.deadtime_ns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != SCHEMA_VERSION:
            raise ValueError(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")
        known = {"stages", "coupler_ratios", "fiber_transmission", "detector_efficiency",
                 "base_delay_ns", "deadtime_ns"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "stages" not in d:
            raise ValueError("stages: missing")
        if d.get("coupler_ratios") is not None:
            d["coupler_ratios"] = tuple(d["coupler_ratios"])
        return cls(**d)


@dataclass(frozen=True)
class ModeWeights:
    """Probability that a single incident photon lands in each detectable mode.

    The weights sum to the total efficiency; ``loss_fraction`` is the rest.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if math.fsum(w) > 1 + 1e-12:
            raise ValueError(f"weights sum to {math.fsum(w)!r} > 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def modes(self) -> int:
        return self.weights.size

    @property
    def efficiency(self) -> float:
        return math.fsum(self.weights)

    @property
    def loss_fraction(self) -> float:
        return max(0.0, 1.0 - self.efficiency)

    def normalized(self) -> np.ndarray:
        """Weights rescaled to sum to one (the lossless mode splitter)."""
        total = self.efficiency
        if total <= 0:
            raise ValueError("weights have no mass; cannot normalise")
        return self.weights / total

    def to_dict(self) -> dict:
        return {"weights": [float(x) for x in self.weights], "loss_fraction": self.loss_fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeWeights":
        if "weights" not in d:
            raise ValueError("weights: missing")
        return cls(d["weights"])


def derive_mode_weights(config: DetectorConfig) -> ModeWeights:
    """Per-mode photon probabilities of the physical fibre network.

    Mode ``i`` is detector ``i // 2**m`` at temporal slot ``i % 2**m``; the slot
    index is the total delay in base lengths, so bit ``s`` set means the photon
    took the long arm of stage ``s`` (transmission ``f**(2**s)``).
    """
    m = config.stages
    f = config.fiber_transmission
    eta = config.detector_efficiency
    ratios = config.coupler_ratios[:m]
    out = config.output_split
    slots = 2**m
    w = np.empty(2 * slots)
    for t in range(slots):
        amp = eta
        for s in range(m):
            if t >> s & 1:
                amp *= (1.0 - ratios[s]) * f ** (2**s)
            else:
                amp *= ratios[s]
        w[t] = amp * out
        w[slots + t] = amp * (1.0 - out)
    return ModeWeights(w)


@dataclass(frozen=True)
class GateSpec:
    """Acceptance windows, one per mode, in nanoseconds after the trigger.

    ``detectors[i]`` restricts window ``i`` to one detector id; ``None`` accepts
    any detector.
    """

    windows: tuple[tuple[float, float], ...]
    detectors: tuple[int | None, ...] | None = None

    def __post_init__(self):
        wins = tuple((float(a), float(b)) for a, b in self.windows)
        if not wins:
            raise ValueError("gate spec has no windows")
        dets = self.detectors if self.detectors is not None else (None,) * len(wins)
        if len(dets) != len(wins):
            raise ValueError("detectors and windows differ in length")
        for (a, b) in wins:
            if not b > a:
                raise ValueError(f"window ({a}, {b}) has non-positive width")
        for i, j in itertools.combinations(range(len(wins)), 2):
            same = dets[i] is None or dets[j] is None or dets[i] == dets[j]
            (a1, b1), (a2, b2) = wins[i], wins[j]
            if same and a1 < b2 and a2 < b1:
                raise ValueError(f"windows {i} and {j} overlap")
        object.__setattr__(self, "windows", wins)
        object.__setattr__(self, "detectors", tuple(dets))

    def __len__(self) -> int:
        return len(self.windows)

    @classmethod
    def from_json(cls, obj) -> "GateSpec":
        """Accept ``[[start, end], ...]`` or ``{"<detector>": [[start, end], ...]}``."""
        if isinstance(obj, dict):
            wins, dets = [], []
            for key in sorted(obj, key=int):
                for pair in obj[key]:
                    wins.append(tuple(pair))
                    dets.append(int(key))
            return cls(tuple(wins), tuple(dets))
        return cls(tuple(tuple(p) for p in obj))

    def to_json(self):
        if all(d is None for d in self.detectors):
            return [list(w) for w in self.windows]
        out: dict[str, list] = {}
        for w, d in zip(self.windows, self.detectors):
            out.setdefault(str(d), []).append(list(w))
        return out


@dataclass(frozen=True)
class RejectionReport:
    total_events: int
    accepted: int
    out_of_window: float
    per_mode_counts: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "total_events": self.total_events,
            "accepted": self.accepted,
            "out_of_window": self.out_of_window,
            "per_mode_counts": list(self.per_mode_counts),
        }


def weights_from_events(events, gates: GateSpec, efficiency: float = 1.0):
    """Mode weights from time-of-arrival records by integrating counts per window.

    ``events`` is an ``(n, 2)`` array-like of ``(detector, arrival_ns)`` rows.
    Returns ``(ModeWeights, RejectionReport)``; weights are scaled to sum to
    ``efficiency``. Events falling in no window are counted as rejected.
    """
    ev = np.asarray(events, dtype=float)
    if ev.size == 0:
        raise ValueError("event stream is empty")
    if ev.ndim != 2 or ev.shape[1] != 2:
        raise ValueError("events must be (detector, arrival_ns) pairs")
    if not 0 <= efficiency <= 1:
        raise ValueError("efficiency must lie in [0, 1]")
    det, t = ev[:, 0], ev[:, 1]
    counts = np.zeros(len(gates), dtype=np.int64)
    for i, ((a, b), d) in enumerate(zip(gates.windows, gates.detectors)):
        hit = (t >= a) & (t < b)
        if d is not None:
            hit &= det == d
        counts[i] = int(hit.sum())
    accepted = int(counts.sum())
    if accepted == 0:
        raise ValueError("no events fall inside any gate window")
    report = RejectionReport(
        total_events=int(ev.shape[0]),
        accepted=accepted,
        out_of_window=(ev.shape[0] - accepted) / ev.shape[0],
        per_mode_counts=tuple(int(c) for c in counts),
    )
    return ModeWeights(efficiency * counts / accepted), report


@dataclass(frozen=True)
class TimingReport:
    base_delay_ns: float
    longest_path_ns: float
    max_rep_rate_hz: float
    max_pulse_duration_ns: float
    deadtime_violation: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def timing(config: DetectorConfig) -> TimingReport:
    """Delay budget: the longest path must clear before the next trigger."""
    dt = config.base_delay_ns
    longest = (2**config.stages - 1) * dt
    return TimingReport(
        base_delay_ns=dt,
        longest_path_ns=longest,
        max_rep_rate_hz=1e9 / longest,
        max_pulse_duration_ns=dt - config.deadtime_ns,
        deadtime_violation=dt <= config.deadtime_ns,
    )
