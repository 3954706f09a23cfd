"""Separation radii, dictionary divergence, homogeneity and explicit constants.

Every separation condition in this package compares a squared distance on the
signal scale with ``C * separation_radius(b, eps)``, where
``separation_radius = eps**2 * sqrt(sum(b**-4))``. That product is the
detection scale for a known spectrum; the level and power arguments behind
the tests are stated in exactly these units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, DomainError, ResourceCapError
from .model import Dictionary, as_dictionary, as_signal, as_spectrum, check_lengths

PARTITION_CAP = 20


def _positive(value: float, name: str) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def separation_radius(b, epsilon: float) -> float:
    """``eps**2 * sqrt(sum_j b_j**-4)``."""
    b = as_spectrum(b)
    epsilon = _positive(epsilon, "epsilon")
    return epsilon**2 * math.sqrt(math.fsum(b.values**-4.0))


def divergence(theta0, b1, b2) -> float:
    """Weighted squared gap ``sum (b1_k)**-2 (b1_k - b2_k)**2 (theta0_k)**2``.

    Not symmetric: the weights come from ``b1``.
    """
    theta0, b1, b2 = as_signal(theta0), as_spectrum(b1), as_spectrum(b2)
    check_lengths(("theta0", theta0), ("b1", b1), ("b2", b2))
    terms = (b1.values - b2.values) ** 2 * theta0.values**2 / b1.values**2
    return math.fsum(terms)


@dataclass(frozen=True)
class RegimeReport:
    """Pairwise heterogeneity of a dictionary at the null signal.

    ``pairwise_ratio[i, j]`` is ``divergence(theta0, b_i, b_j)`` divided by
    ``separation_radius(b_i)``. ``homogeneous`` checks every ordered pair;
    ``homogeneous_unordered`` checks each unordered pair once, with the earlier
    member in the weighting role.
    """

    pairwise_divergence: np.ndarray
    pairwise_ratio: np.ndarray
    homogeneous: bool
    homogeneous_unordered: bool
    worst_pair: tuple[int, int] | None
    worst_ratio: float

    @property
    def size(self) -> int:
        return self.pairwise_ratio.shape[0]


def assumption_a1(dictionary, theta0, epsilon: float) -> RegimeReport:
    """Classify ``dictionary`` as homogeneous or not around ``theta0``."""
    dictionary = as_dictionary(dictionary)
    theta0 = as_signal(theta0)
    check_lengths(("theta0", theta0), ("dictionary members", dictionary[0]))
    K = len(dictionary)
    div = np.zeros((K, K))
    ratio = np.zeros((K, K))
    for i, bi in enumerate(dictionary):
        rho = separation_radius(bi, epsilon)
        for j, bj in enumerate(dictionary):
            if i != j:
                div[i, j] = divergence(theta0, bi, bj)
                ratio[i, j] = div[i, j] / rho
    off = ~np.eye(K, dtype=bool)
    if K > 1:
        flat = int(np.argmax(np.where(off, ratio, -np.inf)))
        worst = divmod(flat, K)
        worst_ratio = float(ratio[worst])
    else:
        worst, worst_ratio = None, 0.0
    upper = np.triu(off)
    div.setflags(write=False)
    ratio.setflags(write=False)
    return RegimeReport(
        pairwise_divergence=div,
        pairwise_ratio=ratio,
        homogeneous=bool(np.all(ratio[off] <= 1.0)),
        homogeneous_unordered=bool(np.all(ratio[upper] <= 1.0)),
        worst_pair=worst,
        worst_ratio=worst_ratio,
    )


def regime_label(report: RegimeReport, partitions: list["Partition"] | None = None) -> str:
    """``homogeneous``, ``non-homogeneous`` or ``mixed`` (some but not all pairs)."""
    if report.homogeneous:
        return "homogeneous"
    if partitions and max(len(p.homogeneous) for p in partitions) > 1:
        return "mixed"
    return "non-homogeneous"


def scale_null_for_ratio(dictionary, direction, epsilon: float, target: float, worst: bool = True):
    """Rescale ``direction`` so the pairwise ratios hit ``target``.

    Ratios are quadratic in the scale of theta0. With ``worst=True`` the largest
    off-diagonal ratio equals ``target``; otherwise the smallest does.
    """
    dictionary = as_dictionary(dictionary)
    if len(dictionary) < 2:
        raise ConfigurationError("need at least two members to calibrate a ratio")
    direction = as_signal(direction)
    rep = assumption_a1(dictionary, direction, epsilon)
    off = ~np.eye(len(dictionary), dtype=bool)
    ref = rep.pairwise_ratio[off].max() if worst else rep.pairwise_ratio[off].min()
    if ref <= 0:
        raise DomainError("direction gives zero divergence; cannot rescale")
    return as_signal(direction.values * math.sqrt(target / ref))


# -- constants ---------------------------------------------------------------


def _level(g: float, name: str, allow_one: bool = False) -> float:
    ok = 0 < g < 1 or (allow_one and g == 1)
    if not ok:
        raise DomainError(f"{name} must lie in (0, 1{']' if allow_one else ')'}, got {g!r}")
    return float(g)


def log_level(gamma: float) -> float:
    """``x_gamma = ln(1/gamma)``."""
    return -math.log(_level(gamma, "gamma", allow_one=True))


def threshold_constant(alpha: float) -> float:
    """Multiplier of the noise scale in the rejection threshold at level ``alpha``."""
    x = log_level(_level(alpha, "alpha", allow_one=True))
    return 1.0 + 2.0 * (2.0 * math.sqrt(x) + x)


def detection_constant(alpha: float, beta: float, parse: str = "verbatim") -> float:
    """Radius constant for the Bonferroni aggregate over a homogeneous dictionary.

    ``parse="verbatim"`` keeps the half power inside the outer radical on
    ``(sqrt(x_{alpha/2}) + sqrt(x_beta))`` alone; ``parse="alternative"``
    applies it to ``sqrt(2) * (...)`` instead.
    """
    xa = log_level(_level(alpha, "alpha") / 2)
    xb = log_level(_level(beta, "beta"))
    s = math.sqrt(xa) + math.sqrt(xb)
    if parse == "verbatim":
        inner = math.sqrt(2.0) * math.sqrt(s)
    elif parse == "alternative":
        inner = math.sqrt(math.sqrt(2.0) * s)
    else:
        raise DomainError(f"unknown parse {parse!r}")
    return math.sqrt(2 * xb) + math.sqrt(2 * (xa + xb) + inner)


def second_moment_cap(alpha: float, beta: float) -> float:
    """``1 + 4 (1 - alpha - beta)**2``; a prior whose likelihood-ratio second
    moment stays below this forces Type II error above ``beta``."""
    return 1.0 + 4.0 * (1.0 - _level(alpha, "alpha") - _level(beta, "beta")) ** 2


def lower_detection_constant(alpha: float, beta: float) -> float | None:
    """``(2 ln C_ab)**(1/4)``; None when ``alpha + beta >= 1``."""
    if alpha + beta >= 1:
        return None
    return (2.0 * math.log(second_moment_cap(alpha, beta))) ** 0.25


def delta_upper(beta: float) -> float:
    """Open upper end of the admissible ``delta`` interval, ``1 / (4 x_{beta/2})``."""
    return 1.0 / (4.0 * log_level(_level(beta, "beta") / 2))


def identifiability_constant(alpha: float, beta: float, delta: float) -> float:
    """Radius constant making a single test at level ``alpha`` miss with
    probability at most ``beta/2``, for a given split parameter ``delta``."""
    a = math.sqrt(log_level(_level(beta, "beta") / 2))
    denom = 1.0 - 2.0 * math.sqrt(delta) * a
    if not 0 < delta < delta_upper(beta) or denom <= 0:
        raise DomainError(f"delta must lie in (0, {delta_upper(beta)!r}), got {delta!r}")
    return (threshold_constant(alpha) + 2.0 * a * (1.0 + 1.0 / math.sqrt(delta))) / denom


def optimal_delta(alpha: float, beta: float) -> float:
    """Minimiser of :func:`identifiability_constant` over the admissible ``delta``.

    The objective is flat at its minimum, so rather than bracketing the
    function value we bracket the sign change of its derivative, which pins
    ``delta`` down to machine precision.
    """
    c = threshold_constant(alpha)
    a = math.sqrt(log_level(_level(beta, "beta") / 2))
    hi = delta_upper(beta)

    def slope(d):
        rd = math.sqrt(d)
        num, dnum = c + 2 * a * (1 + 1 / rd), -a * d**-1.5
        den, dden = 1 - 2 * a * rd, -a / rd
        return dnum * den - num * dden

    return optimize.brentq(slope, hi * 1e-12, hi * (1 - 1e-12), xtol=1e-300, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class ConstantsBundle:
    alpha: float
    beta: float
    x_alpha: float
    x_beta: float
    c_alpha: float
    C1: float
    C_ab: float
    c1: float | None
    delta: float
    C2_const: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def constants(alpha: float, beta: float, parse: str = "verbatim") -> ConstantsBundle:
    """All explicit constants for the level pair ``(alpha, beta)``."""
    alpha, beta = _level(alpha, "alpha"), _level(beta, "beta")
    delta = optimal_delta(alpha, beta)
    return ConstantsBundle(
        alpha=alpha,
        beta=beta,
        x_alpha=log_level(alpha),
        x_beta=log_level(beta),
        c_alpha=threshold_constant(alpha),
        C1=detection_constant(alpha, beta, parse),
        C_ab=second_moment_cap(alpha, beta),
        c1=lower_detection_constant(alpha, beta),
        delta=delta,
        C2_const=identifiability_constant(alpha, beta, delta),
    )


# -- partitions ----------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Split of dictionary indices into a homogeneous part and the rest."""

    homogeneous: tuple[int, ...]
    rest: tuple[int, ...]

    def __post_init__(self):
        h, r = tuple(sorted(self.homogeneous)), tuple(sorted(self.rest))
        if set(h) & set(r):
            raise ConfigurationError(f"partition parts overlap on {sorted(set(h) & set(r))}")
        if len(set(h)) != len(h) or len(set(r)) != len(r):
            raise ConfigurationError("partition parts contain repeated indices")
        object.__setattr__(self, "homogeneous", h)
        object.__setattr__(self, "rest", r)

    def check(self, size: int) -> "Partition":
        """Raise unless the two parts exactly cover ``range(size)``."""
        if sorted(self.homogeneous + self.rest) != list(range(size)):
            raise ConfigurationError(
                f"partition {self.homogeneous} | {self.rest} does not cover {size} members"
            )
        if not self.homogeneous and not self.rest:
            raise ConfigurationError("partition is empty")
        return self

    @classmethod
    def from_homogeneous(cls, homogeneous, size: int) -> "Partition":
        h = tuple(sorted(homogeneous))
        return cls(h, tuple(i for i in range(size) if i not in h)).check(size)


def _compatibility(dictionary: Dictionary, theta0, epsilon: float) -> list[int]:
    """Bitmask per member of the members it is homogeneous with (both orders)."""
    ratio = assumption_a1(dictionary, theta0, epsilon).pairwise_ratio
    ok = (ratio <= 1.0) & (ratio.T <= 1.0)
    return [sum(1 << j for j in range(len(dictionary)) if ok[i, j]) for i in range(len(dictionary))]


def is_homogeneous_subset(dictionary, theta0, epsilon: float, subset) -> bool:
    """Whether every ordered pair inside ``subset`` meets the homogeneity bound."""
    dictionary = as_dictionary(dictionary)
    ratio = assumption_a1(dictionary, theta0, epsilon).pairwise_ratio
    return all(ratio[i, j] <= 1.0 for i in subset for j in subset if i != j)


def find_homogeneous_partitions(dictionary, theta0, epsilon: float) -> list[Partition]:
    """Every nonempty homogeneous subset, returned as a partition of the dictionary.

    Sorted by subset size (largest first), ties by the index tuple.
    """
    dictionary = as_dictionary(dictionary)
    K = len(dictionary)
    if K > PARTITION_CAP:
        raise ResourceCapError(f"partition enumeration is capped at {PARTITION_CAP} members, got {K}")
    compat = _compatibility(dictionary, as_signal(theta0), epsilon)
    valid = bytearray(1 << K)
    valid[0] = 1
    for mask in range(1, 1 << K):
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        valid[mask] = valid[rest] and (compat[low] & rest) == rest
    subsets = [
        tuple(i for i in range(K) if mask >> i & 1) for mask in range(1, 1 << K) if valid[mask]
    ]
    subsets.sort(key=lambda s: (-len(s), s))
    return [Partition.from_homogeneous(s, K) for s in subsets]

