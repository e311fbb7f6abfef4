"""Photon-number reconstruction from click-count histograms."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from scipy import linalg, optimize, stats

from .distributions import (
    PHOTON,
    CountHistogram,
    Distribution,
    binomial_count_model,
    sample_histogram,
)
from .matrices import ConditionalMatrix, LossMatrix, transfer_matrix

METHODS = ("binomial-fit", "poisson-forward-fit", "inversion", "max-likelihood")


class SingularMatrixError(ValueError):
    """The truncated transfer matrix has an exactly zero diagonal element."""

    def __init__(self, k: int):
        super().__init__(f"transfer matrix is singular: zero diagonal at k={k}")
        self.k = k


@dataclass(frozen=True)
class ReconstructionResult:
    rho: Distribution
    method: str
    residual: float
    mu_estimate: float | None = None
    diagnostics: tuple[str, ...] = ()
    error_bars: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.residual >= 0:
            raise ValueError(f"residual must be >= 0, got {self.residual}")
        if self.method != "inversion" and not self.rho.physical:
            raise ValueError(f"{self.method} must produce a physical distribution")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rho": [float(v) for v in self.rho.values],
            "physical": self.rho.physical,
            "mu_estimate": self.mu_estimate,
            "residual": self.residual,
            "diagnostics": list(self.diagnostics),
            "error_bars": None if self.error_bars is None else [float(v) for v in self.error_bars],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionResult":
        physical = d.get("physical", True)
        rho = Distribution(d["rho"], kind=PHOTON, physical=physical,
                           diagnostics=tuple(d.get("diagnostics", ())))
        eb = d.get("error_bars")
        return cls(
            rho=rho,
            method=d["method"],
            residual=d["residual"],
            mu_estimate=d.get("mu_estimate"),
            diagnostics=tuple(d.get("diagnostics", ())),
            error_bars=None if eb is None else np.asarray(eb, float),
            metadata=dict(d.get("metadata", {})),
        )


def _frequencies(data) -> np.ndarray:
    if isinstance(data, CountHistogram):
        if data.pulses == 0:
            raise ValueError("histogram is empty")
        return data.frequencies()
    values = data.values if isinstance(data, Distribution) else np.asarray(data, float)
    if values.size == 0:
        raise ValueError("histogram is empty")
    return np.asarray(values, float)


def _tallies(data) -> np.ndarray:
    if isinstance(data, CountHistogram):
        return data.tallies.astype(float)
    return _frequencies(data)


def _poisson_rho(mu: float) -> Distribution:
    """Poisson photon-number vector long enough to be physical to 1e-12."""
    if mu == 0:
        return Distribution([1.0], kind=PHOTON, metadata={"mu": 0.0})
    n_max = int(stats.poisson.isf(1e-13, mu)) + 2
    values = stats.poisson.pmf(np.arange(n_max + 1), mu)
    values = values / math.fsum(values)
    return Distribution(values, kind=PHOTON, metadata={"mu": float(mu)})


def _minimize_mean(objective: Callable[[float], float], upper: float,
                   points: int = 40, xtol: float = 1e-9, mu_cap: float = 1e6) -> float:
    """Minimise a 1-D objective over ``mu >= 0``.

    A coarse grid (0 plus log-spaced points on ``[1e-3, upper]``) locates a
    bracket, then golden-section search refines it.
    """
    upper = max(upper, 1.0)
    while True:
        grid = np.concatenate(([0.0], np.logspace(-3, math.log10(upper), points)))
        vals = np.array([objective(x) for x in grid])
        i = int(np.argmin(vals))
        if i < grid.size - 1 or upper >= mu_cap:
            break
        upper *= 10
    if i == grid.size - 1:
        return float(grid[-1])
    if i == 0:
        res = optimize.minimize_scalar(objective, bounds=(0.0, grid[1]), method="bounded",
                                       options={"xatol": 1e-12})
        return float(res.x) if res.fun < vals[0] else 0.0
    res = optimize.minimize_scalar(objective, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                   method="golden", options={"xtol": xtol})
    return float(res.x) if res.fun <= vals[i] else float(grid[i])


def fit_binomial(hist, modes: int | None = None) -> ReconstructionResult:
    """Least-squares fit of the equal-weight binomial count model.

    Fit parameters are the effective mean ``mu'`` and an overall normalisation
    (solved in closed form for each trial ``mu'``).
    """
    p = _frequencies(hist)
    if not np.any(p > 0):
        raise ValueError("histogram has no counts")
    N = modes if modes is not None else p.size - 1
    if p.size > N + 1:
        raise ValueError(f"histogram has counts above k={N}")
    data = np.zeros(N + 1)
    data[: p.size] = p
    sq = float(data @ data)

    def model(mu):
        return binomial_count_model(mu, N).values

    def objective(mu):
        b = model(mu)
        return sq - (data @ b) ** 2 / (b @ b)

    kbar = float(np.dot(np.arange(N + 1), data) / data.sum())
    mu = _minimize_mean(objective, 10 * kbar)
    b = model(mu)
    scale = float(data @ b / (b @ b))
    resid = float(np.sum((data - scale * b) ** 2))
    return ReconstructionResult(
        rho=_poisson_rho(mu),
        method="binomial-fit",
        residual=resid,
        mu_estimate=mu,
        metadata={"normalization": scale, "modes": N},
    )


def fit_poisson_forward(hist, C: ConditionalMatrix, L: LossMatrix | None = None
                        ) -> ReconstructionResult:
    """Least-squares fit of a Poisson input pushed through ``C @ L``.

    Returns the fitted mean of the incident Poisson distribution (before the
    loss matrix) and the corresponding physical ``rho``.
    """
    p = _frequencies(hist)
    if not np.any(p > 0):
        raise ValueError("histogram has no counts")
    M = transfer_matrix(C, L)
    if p.size > M.shape[0]:
        raise ValueError(f"histogram has {p.size} bins, matrix only {M.shape[0]} rows")
    data = np.zeros(M.shape[0])
    data[: p.size] = p
    n = np.arange(M.shape[1])

    def objective(mu):
        rho = stats.poisson.pmf(n, mu) if mu > 0 else (n == 0).astype(float)
        return float(np.sum((data - M @ rho) ** 2))

    kbar = float(np.dot(np.arange(data.size), data) / data.sum())
    eta = 1.0 if L is None else L.efficiency
    mu = _minimize_mean(objective, 10 * kbar / max(eta, 1e-3))
    return ReconstructionResult(
        rho=_poisson_rho(mu),
        method="poisson-forward-fit",
        residual=objective(mu),
        mu_estimate=mu,
        metadata={"efficiency": eta},
    )


def invert(hist, C: ConditionalMatrix, L: LossMatrix | None = None,
           condition_threshold: float = 1e-3, tol: float = 1e-12) -> ReconstructionResult:
    """Direct inversion of ``p = C @ L @ rho`` by triangular back-substitution.

    The transfer matrix is truncated to the square block ``min(N, n_max) + 1``.
    Nothing is clipped: negative entries, entries above one and a sum away from
    one are reported in ``diagnostics``.
    """
    p = _frequencies(hist)
    M = transfer_matrix(C, L)
    size = min(M.shape[0], M.shape[1])
    block = M[:size, :size]
    diagnostics = []
    data = np.zeros(size)
    data[: min(size, p.size)] = p[:size]
    if p.size > size and np.any(p[size:] != 0):
        diagnostics.append("data_beyond_truncation")
    diag = np.diag(block)
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]))
    rho = linalg.solve_triangular(block, data, lower=False)
    if np.any(diag < condition_threshold):
        diagnostics.append("condition_warning")
    if np.any(rho < -tol):
        diagnostics.append("negative_entries")
    if np.any(rho > 1 + tol):
        diagnostics.append("entries_above_one")
    if abs(math.fsum(rho) - 1) > 1e-6:
        diagnostics.append("sum_deviation")
    physical = bool(np.all(rho >= 0)) and abs(math.fsum(rho) - 1) <= 1e-9
    dist = Distribution(rho, kind=PHOTON, physical=physical, diagnostics=tuple(diagnostics))
    return ReconstructionResult(
        rho=dist,
        method="inversion",
        residual=float(np.sum((block @ rho - data) ** 2)),
        diagnostics=tuple(diagnostics),
        metadata={"min_diagonal": float(diag.min()), "sum": math.fsum(rho)},
    )


class LikelihoodDecrease(AssertionError):
    pass


def ml_reconstruct(hist, M, tol: float = 1e-10, max_iter: int = 100_000,
                   init=None, check_monotone: bool = False) -> ReconstructionResult:
    """Maximum-likelihood photon-number distribution by expectation-maximisation.

    Maximises ``sum_k h_k log (M rho)_k`` over the probability simplex with the
    multiplicative update ``rho_n <- rho_n sum_k M_kn h_k / (M rho)_k / sum_k h_k``,
    which keeps ``rho`` nonnegative and normalised. ``M`` may be a
    :class:`ConditionalMatrix` or any column-stochastic array (e.g. ``C @ L``).
    Iteration stops when the relative log-likelihood change drops below ``tol``.
    """
    M = np.asarray(M.entries if isinstance(M, ConditionalMatrix) else M, float)
    h = _tallies(hist)
    if h.sum() <= 0:
        raise ValueError("histogram has no counts")
    if h.size > M.shape[0]:
        if np.any(h[M.shape[0]:] > 0):
            raise ValueError(f"histogram has counts above k={M.shape[0] - 1}")
        h = h[: M.shape[0]]
    elif h.size < M.shape[0]:
        h = np.pad(h, (0, M.shape[0] - h.size))
    colsum = M.sum(0)
    if np.any(np.abs(colsum - 1) > 1e-9):
        bad = int(np.argmax(np.abs(colsum - 1)))
        raise ValueError(f"matrix is not column-stochastic (column {bad} sums to {colsum[bad]!r})")
    dead = (h > 0) & (M.sum(1) == 0)
    if np.any(dead):
        raise ValueError(f"matrix row k={int(np.flatnonzero(dead)[0])} is zero but has data")
    total = h.sum()
    obs = h > 0
    if init is None:
        rho = np.full(M.shape[1], 1.0 / M.shape[1])
    else:
        rho = np.asarray(init.values if isinstance(init, Distribution) else init, float).copy()

    def loglik(q):
        return float(np.dot(h[obs], np.log(q[obs])))

    q = M @ rho
    ll = loglik(q)
    it = 0
    converged = False
    while it < max_iter:
        ratio = np.zeros_like(h)
        ratio[obs] = h[obs] / q[obs]
        rho = rho * (M.T @ ratio) / total
        rho /= rho.sum()
        q = M @ rho
        new = loglik(q)
        it += 1
        if check_monotone and new < ll - 1e-12 * abs(ll):
            raise LikelihoodDecrease(f"log-likelihood fell from {ll!r} to {new!r} at iteration {it}")
        change = abs(new - ll)
        ll = new
        if change <= tol * abs(ll) or ll == 0.0:
            converged = True
            break
    diagnostics = () if converged else ("not_converged",)
    return ReconstructionResult(
        rho=Distribution(rho, kind=PHOTON),
        method="max-likelihood",
        residual=max(0.0, -ll),
        diagnostics=diagnostics,
        metadata={"iterations": it, "log_likelihood": ll, "converged": converged},
    )


@dataclass(frozen=True)
class BayesTable:
    """Single-shot posterior ``entries[n, k] = P(n photons | k clicks)``.

    Columns whose click count has zero probability under the prior are
    undefined: ``defined[k]`` is False and the column holds NaN.
    """

    entries: np.ndarray
    defined: np.ndarray
    prior: Distribution
    count_probabilities: np.ndarray

    def column(self, k: int) -> np.ndarray | None:
        return np.array(self.entries[:, k]) if self.defined[k] else None

    def get(self, n: int, k: int) -> float | None:
        if not self.defined[k]:
            return None
        return float(self.entries[n, k]) if n < self.entries.shape[0] else 0.0

    def to_dict(self) -> dict:
        return {
            "prior": [float(v) for v in self.prior.values],
            "count_probabilities": [float(v) for v in self.count_probabilities],
            "columns": {
                str(k): [float(v) for v in self.entries[:, k]]
                for k in range(self.entries.shape[1]) if self.defined[k]
            },
        }


def bayes_table(prior, C: ConditionalMatrix, L: LossMatrix | None = None) -> BayesTable:
    """Posterior photon number for each click count under a given prior."""
    M = transfer_matrix(C, L)
    values = prior.values if isinstance(prior, Distribution) else np.asarray(prior, float)
    if np.any(values < 0):
        raise ValueError("prior has negative entries")
    rho = np.zeros(M.shape[1])
    m = min(values.size, rho.size)
    rho[:m] = values[:m]
    if values.size > rho.size and np.any(values[rho.size:] > 0):
        warnings.warn(f"prior mass beyond n={rho.size - 1} ignored", stacklevel=2)
    joint = M * rho[None, :]
    pk = joint.sum(1)
    defined = pk > 0
    entries = np.full((M.shape[1], M.shape[0]), np.nan)
    entries[:, defined] = (joint[defined] / pk[defined, None]).T
    if not isinstance(prior, Distribution):
        prior = Distribution(values, kind=PHOTON, physical=False)
    return BayesTable(entries, defined, prior, pk)


def _as_vector(out) -> np.ndarray:
    if isinstance(out, ReconstructionResult):
        return np.asarray(out.rho.values, float)
    if isinstance(out, Distribution):
        return np.asarray(out.values, float)
    return np.asarray(out, float)


def monte_carlo_error_bars(source, pipeline: Callable[[CountHistogram], Any], pulses: int,
                           replicates: int = 1000, seed: int | None = 0,
                           workers: int = 1) -> np.ndarray:
    """Per-bin standard deviation of a reconstruction under multinomial resampling.

    ``source`` is the count distribution to resample from (a count-kind
    :class:`Distribution`, a probability vector, or a :class:`CountHistogram`
    whose frequencies are used). Replicate ``i`` draws from its own child of
    ``SeedSequence(seed)``, so output does not depend on ``workers``.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    if pulses < 1:
        raise ValueError("pulses must be positive")
    p = _frequencies(source)
    seeds = np.random.SeedSequence(seed).spawn(replicates)

    def run(ss):
        rng = np.random.default_rng(ss)
        hist = sample_histogram(p, pulses, rng)
        try:
            return _as_vector(pipeline(hist))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(run, seeds))
    else:
        outs = [run(ss) for ss in seeds]
    good = [o for o in outs if o is not None]
    failed = replicates - len(good)
    if failed * 2 > replicates:
        raise RuntimeError(f"pipeline failed on {failed} of {replicates} replicates")
    if len(good) < 2:
        raise RuntimeError("fewer than 2 successful replicates")
    width = max(o.size for o in good)
    stack = np.zeros((len(good), width))
    for i, o in enumerate(good):
        stack[i, : o.size] = o
    return stack.std(axis=0, ddof=1)


def with_error_bars(result: ReconstructionResult, std) -> ReconstructionResult:
    return replace(result, error_bars=np.asarray(std, float))


__all__ = [
    "BayesTable",
    "LikelihoodDecrease",
    "ReconstructionResult",
    "SingularMatrixError",
    "bayes_table",
    "fit_binomial",
    "fit_poisson_forward",
    "invert",
    "ml_reconstruct",
    "monte_carlo_error_bars",
    "with_error_bars",
]
