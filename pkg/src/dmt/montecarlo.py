"""Monte Carlo estimation of worst-case Type I and Type II error rates.

Replication ``i`` always draws its noise from stream ``i`` of the cell seed, so
estimates are bit-identical however the work is split across threads. The cell
seed is the plan seed under ``common_random_numbers`` coupling and a derived
per-member seed under ``independent`` coupling. Noise is shared across
alternatives and power-curve scales; only the signal changes.

The sup over alternatives is replaced by a max over the supplied grid, so a
reported Type II rate is an empirical sup and lower-bounds the true one.
"""

from __future__ import annotations

import math
import os
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError
from .model import (
    Dictionary,
    SignalSequence,
    as_dictionary,
    as_signal,
    as_spectrum,
    check_lengths,
    check_seed,
    derive_seed,
    noise_rows,
)
from .procedures import TEST_KINDS, Procedure, build_procedure
from .rates import Partition

COUPLINGS = ("independent", "common_random_numbers")
MIN_REPLICATIONS = 100
DEFAULT_CONFIDENCE = 0.99
_CHUNK = 2048


def clopper_pearson(k: int, n: int, confidence: float = DEFAULT_CONFIDENCE) -> tuple[float, float]:
    """Exact two-sided binomial interval for ``k`` successes in ``n`` trials."""
    if n < 1 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    tail = (1 - confidence) / 2
    lo = 0.0 if k == 0 else float(stats.beta.ppf(tail, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - tail, k + 1, n - k))
    return lo, hi


def thread_count() -> int:
    raw = os.environ.get("DMT_THREADS")
    if raw is None or raw == "":
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"DMT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"DMT_THREADS must be a positive integer, got {raw!r}")
    return n


# -- noise cache ---------------------------------------------------------------

_cache: OrderedDict[tuple[int, int, int], np.ndarray] = OrderedDict()
_cache_lock = threading.Lock()
_CACHE_SIZE = 16


def noise_matrix(seed: int, n: int, m: int) -> np.ndarray:
    """Standard normal ``(n, m)`` matrix; row ``i`` is stream ``i`` of ``seed``."""
    key = (seed, n, m)
    with _cache_lock:
        if key in _cache:
            _cache.move_to_end(key)
            return _cache[key]
    bounds = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    workers = min(thread_count(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda b: noise_rows(seed, b[0], b[1], m), bounds))
    else:
        blocks = [noise_rows(seed, a, b, m) for a, b in bounds]
    out = np.vstack(blocks)
    out.setflags(write=False)
    with _cache_lock:
        _cache[key] = out
        while len(_cache) > _CACHE_SIZE:
            _cache.popitem(last=False)
    return out


def clear_noise_cache() -> None:
    with _cache_lock:
        _cache.clear()


# -- plans and estimates -------------------------------------------------------


@dataclass(frozen=True)
class Alternative:
    """A signal under the alternative; ``b_index=None`` pairs it with every member."""

    theta: SignalSequence
    b_index: int | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "theta", as_signal(self.theta))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one error-rate estimate.

    ``candidate_index`` only matters for ``single`` tests: None means the test
    uses the true spectrum of each cell, otherwise the given member throughout.
    """

    test_kind: str
    dictionary: Dictionary
    theta0: SignalSequence
    epsilon: float
    alpha: float
    beta: float = 0.05
    alternatives: tuple[Alternative, ...] = ()
    replications: int = 20000
    seed: int = 0
    coupling: str = "independent"
    partition: Partition | None = None
    candidate_index: int | None = None

    def __post_init__(self):
        if self.test_kind not in TEST_KINDS:
            raise ConfigurationError(f"unknown test kind {self.test_kind!r}; expected one of {TEST_KINDS}")
        object.__setattr__(self, "dictionary", as_dictionary(self.dictionary))
        object.__setattr__(self, "theta0", as_signal(self.theta0))
        check_lengths(("theta0", self.theta0), ("dictionary members", self.dictionary[0]))
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        for a in self.alternatives:
            check_lengths(("alternative", a.theta), ("theta0", self.theta0))
            if a.b_index is not None and not 0 <= a.b_index < len(self.dictionary):
                raise ConfigurationError(f"alternative b_index {a.b_index} out of range")
        if self.replications < MIN_REPLICATIONS:
            raise ConfigurationError(f"replications must be at least {MIN_REPLICATIONS}, got {self.replications}")
        if self.coupling not in COUPLINGS:
            raise ConfigurationError(f"coupling must be one of {COUPLINGS}, got {self.coupling!r}")
        check_seed(self.seed)
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        if self.candidate_index is not None and not 0 <= self.candidate_index < len(self.dictionary):
            raise ConfigurationError(f"candidate_index {self.candidate_index} out of range")

    def cell_seed(self, b_index: int) -> int:
        if self.coupling == "common_random_numbers":
            return self.seed
        return derive_seed(self.seed, b_index)

    def procedure(self, b_index: int) -> Procedure:
        cand = self.candidate_index
        if self.test_kind == "single" and cand is None:
            cand = b_index
        return build_procedure(
            self.test_kind,
            self.alpha,
            self.dictionary,
            self.theta0,
            self.epsilon,
            partition=self.partition,
            candidate_index=cand or 0,
        )


@dataclass(frozen=True)
class CellEstimate:
    b_index: int
    alternative: int | None
    label: str
    errors: int
    replications: int
    rate: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ErrorEstimate:
    """Worst cell of an error-rate experiment.

    ``rejections`` counts error events of the worst cell: rejections for a Type
    I estimate and acceptances for a Type II estimate, so that
    ``rate == rejections / replications`` in both cases.
    """

    kind: str
    rate: float
    rejections: int
    replications: int
    ci_low: float
    ci_high: float
    seed: int
    per_b_rates: dict[int, float]
    cells: tuple[CellEstimate, ...] = field(repr=False)

    @property
    def worst_cell(self) -> CellEstimate:
        return max(self.cells, key=lambda c: c.rate)

    def se(self) -> float:
        p = self.rate
        return math.sqrt(p * (1 - p) / self.replications)

    def gate(self, bound: float) -> bool:
        """Passes unless the Clopper-Pearson lower bound of any cell exceeds ``bound``."""
        return all(c.ci_low <= bound for c in self.cells)


def _cell(b_index, alt, label, errors, n) -> CellEstimate:
    lo, hi = clopper_pearson(errors, n)
    return CellEstimate(b_index, alt, label, int(errors), n, errors / n, lo, hi)


def _summarise(kind: str, plan: ExperimentPlan, cells: list[CellEstimate]) -> ErrorEstimate:
    worst = max(cells, key=lambda c: c.rate)  # first maximum in cell order
    per_b: dict[int, float] = {}
    for c in cells:
        per_b[c.b_index] = max(per_b.get(c.b_index, 0.0), c.rate)
    return ErrorEstimate(
        kind=kind,
        rate=worst.rate,
        rejections=worst.errors,
        replications=worst.replications,
        ci_low=worst.ci_low,
        ci_high=worst.ci_high,
        seed=plan.seed,
        per_b_rates=dict(sorted(per_b.items())),
        cells=tuple(cells),
    )


def _rejections(plan: ExperimentPlan, b_index: int, theta: np.ndarray, proc: Procedure) -> int:
    b = plan.dictionary[b_index].values
    xi = noise_matrix(plan.cell_seed(b_index), plan.replications, plan.dictionary.m)
    mean = b * theta
    total = 0
    for start in range(0, plan.replications, _CHUNK):
        Y = mean + plan.epsilon * xi[start : start + _CHUNK]
        total += int(np.count_nonzero(proc.decide(Y)))
    return total


def estimate_type1(plan: ExperimentPlan) -> ErrorEstimate:
    """Rejection rate under ``(theta0, b)`` for each member ``b``; worst member reported."""
    cells = []
    for j in range(len(plan.dictionary)):
        k = _rejections(plan, j, plan.theta0.values, plan.procedure(j))
        cells.append(_cell(j, None, "null", k, plan.replications))
    return _summarise("type1", plan, cells)


def estimate_type2(plan: ExperimentPlan) -> ErrorEstimate:
    """Acceptance rate for every (alternative, member) cell; worst cell reported."""
    if not plan.alternatives:
        raise ConfigurationError("a Type II estimate needs at least one alternative")
    procs: dict[int, Procedure] = {}
    cells = []
    n = plan.replications
    for a_idx, alt in enumerate(plan.alternatives):
        members = range(len(plan.dictionary)) if alt.b_index is None else (alt.b_index,)
        for j in members:
            if j not in procs:
                procs[j] = plan.procedure(j)
            k = _rejections(plan, j, alt.theta.values, procs[j])
            cells.append(_cell(j, a_idx, alt.label or f"alt{a_idx}", n - k, n))
    return _summarise("type2", plan, cells)


@dataclass(frozen=True)
class PowerPoint:
    scale: float
    estimate: ErrorEstimate


def scaled_alternatives(plan: ExperimentPlan, scale: float) -> tuple[Alternative, ...]:
    th0 = plan.theta0.values
    return tuple(
        replace(a, theta=SignalSequence(th0 + scale * (a.theta.values - th0))) for a in plan.alternatives
    )


def power_curve(plan: ExperimentPlan, scaling_grid) -> list[PowerPoint]:
    """Type II estimate along ``theta0 + s (theta_alt - theta0)`` for each ``s``.

    Every grid point reuses the same noise, so ``s = 0`` reproduces the
    complement of the Type I rate exactly.
    """
    return [
        PowerPoint(float(s), estimate_type2(replace(plan, alternatives=scaled_alternatives(plan, float(s)))))
        for s in scaling_grid
    ]


# -- concentration of the statistic ----------------------------------------------


@dataclass(frozen=True)
class ConcentrationResult:
    x: float
    bound: float
    threshold: float
    exceedances: int
    replications: int
    rate: float
    ci_low: float
    ci_high: float
    mean_analytic: float
    mean_empirical: float
    mean_se: float

    @property
    def passed(self) -> bool:
        """Clopper-Pearson gate: the lower bound must not exceed ``exp(-x)``."""
        return self.ci_low <= self.bound

    @property
    def passed_normal(self) -> bool:
        """Quick check ``rate <= exp(-x) + 3 SE`` with the SE taken at the bound."""
        se = math.sqrt(self.bound * (1 - self.bound) / self.replications)
        return self.rate <= self.bound + 3 * se


def concentration_threshold(b, mu_shift, epsilon: float, x: float) -> tuple[float, float]:
    """``(E[T], E[T] + deviation)`` for ``T = sum (mu_k + eps xi_k / b_k)**2``."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x!r}")
    bv, mu = as_spectrum(b).values, as_signal(mu_shift).values
    check_lengths(("b", bv), ("mu_shift", mu))
    e2 = epsilon**2
    mean = math.fsum(mu**2) + e2 * math.fsum(bv**-2.0)
    spread = math.sqrt(e2**2 * math.fsum(bv**-4.0) + 2 * e2 * math.fsum(bv**-2.0 * mu**2))
    return mean, mean + 2 * math.sqrt(x) * spread + 2 * x * e2 * float(np.max(bv**-2.0))


def concentration_check(b, mu_shift, epsilon: float, x: float, N: int, seed: int) -> ConcentrationResult:
    """Empirical probability that ``T`` exceeds its tail threshold at level ``exp(-x)``."""
    if N < 1:
        raise DomainError("N must be at least 1")
    bv, mu = as_spectrum(b).values, as_signal(mu_shift).values
    mean, thr = concentration_threshold(bv, mu, epsilon, x)
    xi = noise_matrix(check_seed(seed), N, bv.size)
    T = ((mu + epsilon * xi / bv) ** 2).sum(axis=1)
    k = int(np.count_nonzero(T > thr))
    lo, hi = clopper_pearson(k, N)
    return ConcentrationResult(
        x=float(x),
        bound=math.exp(-x),
        threshold=thr,
        exceedances=k,
        replications=N,
        rate=k / N,
        ci_low=lo,
        ci_high=hi,
        mean_analytic=mean,
        mean_empirical=float(T.mean()),
        mean_se=float(T.std(ddof=1) / math.sqrt(N)) if N > 1 else float("nan"),
    )
