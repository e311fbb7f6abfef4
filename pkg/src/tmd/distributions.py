"""Probability vectors over photon number or count number, and count histograms."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

PHOTON = "photon-number"
COUNT = "count-number"

#: Truncated tail mass above which a warning is attached.
TAIL_WARN = 1e-6


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Distribution:
    """Probability vector indexed from 0 (photon number ``n`` or count number ``k``).

    ``physical`` marks vectors that are nonnegative and sum to one within 1e-9.
    Unphysical vectors (typically produced by matrix inversion) carry
    ``diagnostics`` instead. ``metadata`` holds things like the Poisson mean or
    the truncated tail mass.
    """

    values: np.ndarray
    kind: str = PHOTON
    physical: bool = True
    diagnostics: tuple[str, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("distribution values must be a nonempty 1-D vector")
        if self.kind not in (PHOTON, COUNT):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.physical:
            if np.any(self.values < 0) or not math.isclose(
                math.fsum(self.values), 1.0, rel_tol=0, abs_tol=1e-9
            ):
                raise ValueError("physical distribution must be nonnegative and sum to 1")

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    @property
    def n_max(self) -> int:
        return self.values.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.values.size), self.values))

    def padded(self, size: int) -> np.ndarray:
        """Values zero-padded (or checked-truncated) to ``size`` entries."""
        out = np.zeros(size)
        m = min(size, self.values.size)
        out[:m] = self.values[:m]
        if self.values.size > size and np.any(self.values[size:] != 0):
            raise ValueError(f"distribution has support beyond index {size - 1}")
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "values": [float(v) for v in self.values],
            "physical": self.physical,
            "diagnostics": list(self.diagnostics),
            "warnings": list(self.warnings),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        return cls(
            values=d["values"],
            kind=d.get("kind", PHOTON),
            physical=d.get("physical", True),
            diagnostics=tuple(d.get("diagnostics", ())),
            warnings=tuple(d.get("warnings", ())),
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def delta(cls, j: int, size: int, kind: str = PHOTON) -> "Distribution":
        if not 0 <= j < size:
            raise ValueError(f"delta index {j} outside 0..{size - 1}")
        v = np.zeros(size)
        v[j] = 1.0
        return cls(v, kind=kind)


def poisson_distribution(mu: float, n_max: int | None = None) -> Distribution:
    """Truncated Poisson photon-number distribution.

    Entries are the exact pmf ``mu**n exp(-mu) / n!`` for ``n = 0..n_max``;
    the vector is *not* renormalised, so the mass beyond ``n_max`` is reported
    in ``metadata["tail_mass"]``. When the tail exceeds 1e-6 the result is
    marked unphysical and a ``truncation`` warning is attached.
    """
    if not mu >= 0 or not math.isfinite(mu):
        raise ValueError(f"Poisson mean must be finite and >= 0, got {mu}")
    if n_max is None:
        n_max = default_n_max(mu)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    n = np.arange(n_max + 1)
    if mu == 0:
        values = (n == 0).astype(float)
        tail = 0.0
    else:
        values = stats.poisson.pmf(n, mu)
        tail = float(stats.poisson.sf(n_max, mu))
    warns = ()
    if tail > TAIL_WARN:
        warns = (f"truncation: tail mass {tail:.3g} beyond n={n_max}",)
    physical = not warns and abs(math.fsum(values) - 1.0) <= 1e-9
    return Distribution(
        values,
        kind=PHOTON,
        physical=physical,
        diagnostics=("truncated",) if warns else (),
        metadata={"mu": float(mu), "tail_mass": tail},
        warnings=warns,
    )


def default_n_max(mu: float) -> int:
    """Truncation used for Poisson workflows: ``max(4 mu, 16)`` rounded up."""
    return max(int(math.ceil(4 * mu)), 16)


def binomial_count_model(mu_prime: float, modes: int) -> Distribution:
    """Count distribution for a coherent input on ``modes`` equally weighted modes.

    Each mode is independently empty with probability ``exp(-mu_prime / modes)``;
    ``mu_prime`` is the total effective mean photon number after losses.
    """
    if modes < 1:
        raise ValueError("mode count must be >= 1")
    if not mu_prime >= 0:
        raise ValueError(f"mu_prime must be >= 0, got {mu_prime}")
    k = np.arange(modes + 1)
    if math.isinf(mu_prime):
        values = (k == modes).astype(float)
    else:
        fire = -math.expm1(-mu_prime / modes)
        values = stats.binom.pmf(k, modes, fire)
    return Distribution(values, kind=COUNT, metadata={"mu_prime": float(mu_prime)})


@dataclass(frozen=True)
class CountHistogram:
    """Integer event tallies for ``k = 0..N`` counts over ``pulses`` triggers.

    Zero-count pulses must be recorded in ``tallies[0]``; normalisation is per
    trigger.
    """

    tallies: np.ndarray
    pulses: int | None = None

    def __post_init__(self):
        t = np.asarray(self.tallies)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("tallies must be a nonempty 1-D vector")
        if np.any(t < 0) or np.any(t != np.round(t)):
            raise ValueError("tallies must be nonnegative integers")
        t = t.astype(np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "tallies", t)
        total = int(t.sum())
        if self.pulses is None:
            object.__setattr__(self, "pulses", total)
        elif int(self.pulses) != total:
            raise ValueError(f"tallies sum to {total} but pulses = {self.pulses}")

    @property
    def modes(self) -> int:
        return self.tallies.size - 1

    def frequencies(self) -> np.ndarray:
        if self.pulses == 0:
            raise ValueError("histogram is empty")
        return self.tallies / self.pulses

    def mean(self) -> float:
        return float(np.dot(np.arange(self.tallies.size), self.frequencies()))

    @classmethod
    def from_counts(cls, counts, modes: int) -> "CountHistogram":
        """Tally an array of per-pulse count values."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size and (counts.min() < 0 or counts.max() > modes):
            raise ValueError("count values outside 0..modes")
        return cls(np.bincount(counts, minlength=modes + 1))


def sample_histogram(p, pulses: int, rng: np.random.Generator) -> CountHistogram:
    """Multinomial draw of ``pulses`` triggers from count probabilities ``p``."""
    p = np.clip(np.asarray(p, dtype=float), 0, None)
    s = p.sum()
    if s <= 0:
        raise ValueError("probability vector has no mass")
    if abs(s - 1) > 1e-6:
        warnings.warn(f"count probabilities sum to {s:.8f}; renormalising", stacklevel=2)
    return CountHistogram(rng.multinomial(pulses, p / s))
