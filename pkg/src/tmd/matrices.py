"""Count-statistics transfer matrices and forward prediction.

``C`` maps photon number behind the (lossless) mode splitter to click count;
``L`` thins the incident photon number by the total efficiency. The count
distribution for an incident photon-number distribution ``rho`` is
``C @ L @ rho``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, gammaln, xlog1py, xlogy

from .device import ModeWeights
from .distributions import COUNT, Distribution

#: Largest number of matrix entries ``conditional_matrix`` will build.
MAX_ENTRIES = 20_000_000

_IE_MAX_MODES = 20


@dataclass(frozen=True)
class ConditionalMatrix:
    """``entries[k, n]`` is the probability of ``k`` clicks given ``n`` photons."""

    entries: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("entries", "weights"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.entries.shape[0] != self.weights.size + 1:
            raise ValueError("entries must have one row per count value 0..N")

    @property
    def mode_count(self) -> int:
        return self.weights.size

    @property
    def truncation(self) -> int:
        return self.entries.shape[1] - 1


@dataclass(frozen=True)
class LossMatrix:
    """``entries[m, n]`` is the probability that ``m`` of ``n`` photons survive."""

    entries: np.ndarray
    efficiency: float

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def truncation(self) -> int:
        return self.entries.shape[0] - 1


def _binom_table(n_max: int, q: float) -> np.ndarray:
    """``T[n, a] = P(Binomial(n, q) = a)``, zero above the diagonal."""
    n = np.arange(n_max + 1)[:, None]
    a = np.arange(n_max + 1)[None, :]
    if q in (0.0, 1.0):
        return (a == (n if q == 1.0 else 0)).astype(float) * (a <= n)
    # log space: scipy's pmf overflows for subnormal q
    with np.errstate(invalid="ignore"):
        logt = (gammaln(n + 1) - gammaln(a + 1) - gammaln(n - a + 1)
                + xlogy(a, q) + xlog1py(n - a, -q))
    return np.where(a <= n, np.exp(logt), 0.0)


def occupancy_matrix(probs, n_max: int, detected=None) -> np.ndarray:
    """Exact click-count distribution for ``n = 0..n_max`` balls.

    Each ball independently lands in bin ``i`` with probability ``probs[i]``
    (which must sum to one). Only bins flagged in ``detected`` register a click
    when occupied. Returns an ``(D + 1, n_max + 1)`` array where ``D`` is the
    number of detected bins.

    Bins are added one at a time. Conditional on ``n`` balls in the bins seen
    so far, the number in the newly added bin is binomial with success
    probability ``p_i / S`` (``S`` the mass seen so far), so the recursion only
    ever adds nonnegative terms.
    """
    probs = np.asarray(probs, dtype=float)
    if detected is None:
        detected = np.ones(probs.size, dtype=bool)
    detected = np.asarray(detected, dtype=bool)
    if not math.isclose(math.fsum(probs), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("bin probabilities must sum to 1")
    kmax = int(detected.sum())
    g = np.zeros((n_max + 1, kmax + 1))
    g[0, 0] = 1.0
    seen = 0.0
    for p, det in zip(probs, detected):
        if p == 0:
            continue
        seen += p
        q = min(p / seen, 1.0)
        table = _binom_table(n_max, q)
        new = table[:, :1] * g
        for a in range(1, n_max + 1):
            col = table[a:, a:a + 1]
            if det:
                new[a:, 1:] += col * g[:-a, :-1]
            else:
                new[a:, :] += col * g[:-a, :]
        g = new
    return g.T.copy()


def occupancy_inclusion_exclusion(probs, n_max: int) -> np.ndarray:
    """Same as :func:`occupancy_matrix` (all bins detected) by inclusion-exclusion.

    ``P(occupied bins within T) = (sum_{i in T} p_i)**n``; the exactly-``k``
    probability is a signed combination of these, summed with ``math.fsum``.
    Exponential in the number of bins.
    """
    probs = np.asarray(probs, dtype=float)
    N = probs.size
    if N > _IE_MAX_MODES:
        raise ValueError(f"inclusion-exclusion limited to {_IE_MAX_MODES} bins")
    masks = np.arange(1 << N)
    bits = (masks[:, None] >> np.arange(N)) & 1
    sizes = bits.sum(1)
    sums = bits @ probs
    n = np.arange(n_max + 1)
    powers = sums[:, None] ** n[None, :]
    powers[0, 0] = 1.0
    # A[t, n] = sum over subsets of size t of (subset mass)**n
    A = np.array([[math.fsum(powers[sizes == t, j]) for j in n] for t in range(N + 1)])
    out = np.zeros((N + 1, n_max + 1))
    for k in range(N + 1):
        for j in range(k, n_max + 1):
            terms = [(-1) ** (k - t) * comb(N - t, k - t, exact=True) * A[t, j]
                     for t in range(k + 1)]
            out[k, j] = math.fsum(terms)
    return out


def conditional_matrix(weights, n_max: int, method: str = "recursive",
                       max_entries: int = MAX_ENTRIES) -> ConditionalMatrix:
    """Conditional click-count matrix for a lossless splitter with the given weights.

    ``weights`` (a :class:`ModeWeights` or a vector) must sum to one within
    1e-9; pass ``ModeWeights.normalized()`` for lossy devices and put the loss
    in :func:`loss_matrix`. ``method`` is ``"recursive"`` (default) or
    ``"inclusion-exclusion"``.
    """
    w = weights.weights if isinstance(weights, ModeWeights) else np.asarray(weights, float)
    if abs(math.fsum(w) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {math.fsum(w)!r}); normalise first")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    # the recursion also builds (n_max + 1)**2 binomial tables
    if max(w.size + 1, n_max + 1) * (n_max + 1) > max_entries:
        raise ValueError(f"matrix {(w.size + 1)}x{(n_max + 1)} exceeds size cap {max_entries}")
    if method == "recursive":
        c = occupancy_matrix(w, n_max)
    elif method == "inclusion-exclusion":
        c = occupancy_inclusion_exclusion(w, n_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    # structural zeros (no more clicks than photons)
    c = np.triu(np.clip(c, 0.0, 1.0))
    return ConditionalMatrix(c, w)


def loss_matrix(efficiency: float, n_max: int) -> LossMatrix:
    """Binomial thinning matrix ``l[m, n] = C(n, m) eta**m (1 - eta)**(n - m)``."""
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {efficiency}")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    return LossMatrix(_binom_table(n_max, efficiency).T.copy(), float(efficiency))


def transfer_matrix(C: ConditionalMatrix, L: LossMatrix | None = None) -> np.ndarray:
    """Combined photon-number to click-count matrix ``C @ L``."""
    if L is None:
        return np.array(C.entries)
    if C.entries.shape[1] != L.entries.shape[0]:
        raise ValueError(
            f"dimension mismatch: C has {C.entries.shape[1]} columns, L has {L.entries.shape[0]} rows"
        )
    return C.entries @ L.entries


def _rho_vector(rho, size: int) -> tuple[np.ndarray, list[str]]:
    values = rho.values if isinstance(rho, Distribution) else np.asarray(rho, float)
    if np.any(values < 0):
        raise ValueError("photon-number distribution has negative entries")
    notes = list(rho.warnings) if isinstance(rho, Distribution) else []
    v = np.zeros(size)
    m = min(size, values.size)
    v[:m] = values[:m]
    if values.size > size:
        dropped = math.fsum(values[size:])
        if dropped > 0:
            notes.append(f"truncation: input mass {dropped:.3g} beyond n={size - 1} dropped")
    return v, notes


def forward(C: ConditionalMatrix, L: LossMatrix | None, rho) -> Distribution:
    """Predicted click-count distribution ``C @ L @ rho``."""
    M = transfer_matrix(C, L)
    v, notes = _rho_vector(rho, M.shape[1])
    p = M @ v
    total = math.fsum(p)
    if abs(total - 1.0) > 1e-9 and not notes:
        notes.append(f"truncation: predicted counts sum to {total:.12g}")
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return Distribution(
        p,
        kind=COUNT,
        physical=abs(total - 1.0) <= 1e-9,
        diagnostics=("truncated",) if abs(total - 1.0) > 1e-9 else (),
        warnings=tuple(notes),
    )


def forward_physical(weights: ModeWeights, rho, n_max: int | None = None) -> Distribution:
    """Click-count distribution with loss kept as an explicit undetected bin.

    Each photon lands in detectable mode ``i`` with probability ``P_i`` or is
    lost with probability ``1 - sum(P_i)``; no separate loss matrix is used.
    """
    probs = np.append(weights.weights, weights.loss_fraction)
    probs = probs / math.fsum(probs)
    detected = np.append(np.ones(weights.modes, bool), False)
    if n_max is None:
        n_max = len(rho) - 1
    M = occupancy_matrix(probs, n_max, detected)
    v, notes = _rho_vector(rho, n_max + 1)
    p = M @ v
    total = math.fsum(p)
    return Distribution(p, kind=COUNT, physical=abs(total - 1) <= 1e-9, warnings=tuple(notes))


def coherent_counts(weights: ModeWeights, mu: float) -> Distribution:
    """Click-count distribution for a coherent pulse of mean ``mu``.

    Mode occupations are independent Poisson variables with means ``mu * P_i``,
    so the click count is Poisson-binomial; no photon-number truncation.
    """
    fire = -np.expm1(-mu * weights.weights)
    p = np.zeros(weights.modes + 1)
    p[0] = 1.0
    for q in fire:
        p[1:] = p[1:] * (1 - q) + p[:-1] * q
        p[0] *= 1 - q
    return Distribution(p, kind=COUNT, metadata={"mu": float(mu)})


def fock_diagonal_closed_form(modes: int, j: int, efficiency: float) -> float:
    """All-clicks probability ``N! / (N**j (N - j)!) * eta**j`` for equal weights."""
    if not 0 <= j <= modes:
        return 0.0
    return math.perm(modes, j) / modes**j * efficiency**j
