"""Seeded Monte Carlo simulation of single-shot detector experiments."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .device import ModeWeights
from .distributions import CountHistogram, Distribution, poisson_distribution
from .matrices import conditional_matrix, fock_diagonal_closed_form, loss_matrix, transfer_matrix

#: Pulses per RNG stream. Fixed so that results do not depend on the worker count.
BLOCK_SIZE = 1 << 16
GENERATOR = "numpy.random.PCG64"


@dataclass(frozen=True)
class SourceSpec:
    """Photon source: ``coherent`` (Poisson ``mu``), ``fock`` (exactly ``n``) or ``custom``."""

    kind: str
    pulses: int
    mu: float | None = None
    n: int | None = None
    distribution: Distribution | None = None

    def __post_init__(self):
        if int(self.pulses) != self.pulses or self.pulses < 1:
            raise ValueError(f"pulses must be a positive integer, got {self.pulses!r}")
        if self.kind == "coherent":
            if self.mu is None or not self.mu >= 0:
                raise ValueError("coherent source needs mu >= 0")
        elif self.kind == "fock":
            if self.n is None or int(self.n) != self.n or self.n < 0:
                raise ValueError("fock source needs an integer n >= 0")
        elif self.kind == "custom":
            if self.distribution is None or not self.distribution.physical:
                raise ValueError("custom source needs a physical distribution")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def coherent(cls, mu: float, pulses: int) -> "SourceSpec":
        return cls("coherent", pulses, mu=float(mu))

    @classmethod
    def fock(cls, n: int, pulses: int) -> "SourceSpec":
        return cls("fock", pulses, n=int(n))

    @classmethod
    def custom(cls, distribution: Distribution, pulses: int) -> "SourceSpec":
        return cls("custom", pulses, distribution=distribution)

    def photon_distribution(self, n_max: int | None = None) -> Distribution:
        if self.kind == "coherent":
            return poisson_distribution(self.mu, n_max)
        if self.kind == "fock":
            size = max(self.n, n_max or 0) + 1
            return Distribution.delta(self.n, size)
        return self.distribution

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "pulses": int(self.pulses)}
        if self.kind == "coherent":
            d["mu"] = self.mu
        elif self.kind == "fock":
            d["n"] = self.n
        else:
            d["distribution"] = [float(v) for v in self.distribution.values]
        return d


@dataclass(frozen=True)
class ShotRecord:
    photons_in: int
    photons_surviving: int
    occupied_modes: frozenset[int]
    counts: int

    def to_dict(self) -> dict:
        return {
            "photons_in": self.photons_in,
            "photons_surviving": self.photons_surviving,
            "occupied_modes": sorted(self.occupied_modes),
            "counts": self.counts,
        }


@dataclass(frozen=True)
class SimulationResult:
    histogram: CountHistogram
    records: tuple[ShotRecord, ...] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)


def weights_digest(weights: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(weights, dtype="<f8").tobytes()).hexdigest()


def _draw_photons(source: SourceSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    if source.kind == "coherent":
        return rng.poisson(source.mu, size)
    if source.kind == "fock":
        return np.full(size, source.n, dtype=np.int64)
    p = np.asarray(source.distribution.values, float)
    return rng.choice(p.size, size=size, p=p / p.sum())


def _simulate_block(source, probs, efficiency, dark, size, seed_seq, keep_records):
    rng = np.random.default_rng(seed_seq)
    n_in = _draw_photons(source, size, rng)
    n_kept = rng.binomial(n_in, efficiency)
    modes = probs.size
    landed = rng.choice(modes, size=int(n_kept.sum()), p=probs)
    occupied = np.zeros((size, modes), dtype=bool)
    occupied[np.repeat(np.arange(size), n_kept), landed] = True
    if dark > 0:
        occupied |= rng.random((size, modes)) < dark
    counts = occupied.sum(axis=1)
    records = None
    if keep_records:
        records = [
            ShotRecord(int(a), int(b), frozenset(np.flatnonzero(row).tolist()), int(c))
            for a, b, row, c in zip(n_in, n_kept, occupied, counts)
        ]
    return np.bincount(counts, minlength=modes + 1), records


def simulate(source: SourceSpec, weights: ModeWeights, efficiency: float | None = None,
             seed: int | None = None, dark_count_prob: float = 0.0,
             records: bool = False, workers: int = 1) -> SimulationResult:
    """Simulate ``source.pulses`` triggers on a detector with the given mode weights.

    Per pulse: draw the photon number, thin it binomially with ``efficiency``
    (default: the sum of ``weights``), drop each survivor into a mode with the
    normalised weights, optionally add independent dark clicks per mode, and
    count occupied modes.

    Pulses are processed in fixed blocks of ``BLOCK_SIZE``; block ``b`` draws
    from child ``b`` of ``SeedSequence(seed)``, so the histogram depends only
    on the inputs and the seed.
    """
    if efficiency is None:
        efficiency = weights.efficiency
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {efficiency}")
    if not 0.0 <= dark_count_prob <= 1.0:
        raise ValueError("dark_count_prob must lie in [0, 1]")
    probs = weights.normalized()
    root = np.random.SeedSequence(seed)
    nblocks = -(-source.pulses // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, source.pulses - b * BLOCK_SIZE) for b in range(nblocks)]
    children = root.spawn(nblocks)

    def run(b):
        return _simulate_block(source, probs, efficiency, dark_count_prob, sizes[b],
                               children[b], records)

    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(run, range(nblocks)))
    else:
        outs = [run(b) for b in range(nblocks)]
    tallies = np.sum([o[0] for o in outs], axis=0)
    shot_records = None
    if records:
        shot_records = tuple(r for o in outs for r in o[1])
    metadata = {
        "seed": root.entropy,
        "generator": GENERATOR,
        "block_size": BLOCK_SIZE,
        "source": source.to_dict(),
        "efficiency": float(efficiency),
        "dark_count_prob": float(dark_count_prob),
        "weights_sha256": weights_digest(probs),
    }
    return SimulationResult(CountHistogram(tallies), shot_records, metadata)


@dataclass(frozen=True)
class FockDiagonalRow:
    modes: int
    j: int
    efficiency: float
    analytic: float
    matrix: float


def sweep_fock_diagonal(modes: int, j_values, efficiencies, weights=None) -> list[FockDiagonalRow]:
    """Probability of registering all ``j`` photons of a ``j``-photon Fock state.

    ``analytic`` is the equal-weight closed form; ``matrix`` is the diagonal of
    ``C @ L`` built from ``weights`` (equal weights by default).
    """
    j_values = [int(j) for j in j_values]
    if any(not 1 <= j <= modes for j in j_values):
        raise ValueError(f"j must lie in 1..{modes}")
    if weights is None:
        w = np.full(modes, 1.0 / modes)
    else:
        w = weights.normalized() if isinstance(weights, ModeWeights) else np.asarray(weights, float)
        if w.size != modes:
            raise ValueError("weights length does not match mode count")
    n_max = max(j_values)
    C = conditional_matrix(w, max(n_max, 1))
    rows = []
    for eta in efficiencies:
        M = transfer_matrix(C, loss_matrix(float(eta), C.truncation))
        for j in j_values:
            rows.append(FockDiagonalRow(modes, j, float(eta),
                                        fock_diagonal_closed_form(modes, j, float(eta)),
                                        float(M[j, j])))
    return rows


__all__ = [
    "BLOCK_SIZE",
    "FockDiagonalRow",
    "ShotRecord",
    "SimulationResult",
    "SourceSpec",
    "simulate",
    "sweep_fock_diagonal",
]
