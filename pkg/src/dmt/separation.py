"""Separation-set membership and the adversarial lower-bound construction.

The lower bound perturbs the pullback of ``bbar * theta0`` through the true
spectrum ``b`` by Rademacher signs:

    b_k theta_k = bbar_k theta0_k + omega_k tau R bbar_k**-1 / sqrt(sum_j bbar_j**-4)

with ``R**2 = sqrt(ln C_ab) * separation_radius(bbar)``. Data drawn under
``(theta, b)`` then look like data under ``(theta0, bbar)``: the second moment
of the likelihood ratio has the closed form ``prod_k cosh(lambda_k**2)`` with
``lambda_k**2 = tau**2 R**2 bbar_k**-2 / (eps**2 sum_j bbar_j**-4)``, which stays
below ``C_ab`` for every ``tau`` in [0, 1].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, DomainError, ResourceCapError
from .model import (
    Dictionary,
    SignalSequence,
    as_dictionary,
    as_signal,
    as_spectrum,
    check_lengths,
    gaussian_stream,
    rademacher_stream,
)
from .rates import Partition, detection_constant, second_moment_cap, separation_radius

MIN_SPECTRUM_VALUE = 1e-300
ENUMERATION_CAP = 20
MEMBERSHIP_RTOL = 1e-12


def _at_least(lhs: float, rhs: float, rtol: float) -> bool:
    # boundary points count as members; rtol absorbs rounding in rhs
    return lhs >= rhs * (1.0 - rtol)


def identifiability_gap(theta, theta0, b, bbar) -> float:
    """``sum_k bbar_k**-2 (b_k theta_k - bbar_k theta0_k)**2``."""
    theta, theta0 = as_signal(theta), as_signal(theta0)
    b, bbar = as_spectrum(b), as_spectrum(bbar)
    check_lengths(("theta", theta), ("theta0", theta0), ("b", b), ("bbar", bbar))
    r = (b.values * theta.values - bbar.values * theta0.values) / bbar.values
    return math.fsum(r**2)


@dataclass(frozen=True)
class SeparationQuery:
    theta: SignalSequence
    theta0: SignalSequence
    dictionary: Dictionary
    true_index: int
    epsilon: float
    C: float

    def __post_init__(self):
        object.__setattr__(self, "theta", as_signal(self.theta))
        object.__setattr__(self, "theta0", as_signal(self.theta0))
        object.__setattr__(self, "dictionary", as_dictionary(self.dictionary))
        if not 0 <= self.true_index < len(self.dictionary):
            raise DomainError(f"true_index {self.true_index} out of range")
        check_lengths(("theta", self.theta), ("theta0", self.theta0), ("members", self.dictionary[0]))
        if not self.C > 0:
            raise DomainError(f"radius constant must be positive, got {self.C!r}")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon!r}")

    @property
    def b(self):
        return self.dictionary[self.true_index]


def in_theta1(q: SeparationQuery, rtol: float = MEMBERSHIP_RTOL) -> bool:
    """``||theta - theta0||**2 >= C * separation_radius(b)``."""
    dist = math.fsum((q.theta.values - q.theta0.values) ** 2)
    return _at_least(dist, q.C * separation_radius(q.b, q.epsilon), rtol)


def in_theta2(q: SeparationQuery, rtol: float = MEMBERSHIP_RTOL) -> bool:
    """Identifiability: for every other member ``bt``, the image ``b theta`` is
    at least ``C * separation_radius(bt)`` away from ``bt theta0``.

    Vacuously true for a one-member dictionary.
    """
    return all(
        _at_least(
            identifiability_gap(q.theta, q.theta0, q.b, bt),
            q.C * separation_radius(bt, q.epsilon),
            rtol,
        )
        for j, bt in enumerate(q.dictionary)
        if j != q.true_index
    )


def in_theta3(
    theta,
    theta0,
    dictionary,
    true_index: int,
    partition: Partition,
    epsilon: float,
    C1: float,
    C2: float,
    rtol: float = MEMBERSHIP_RTOL,
) -> bool:
    """Union over the homogeneous part at ``C1``, intersected with every member
    of the rest at ``C2``. An empty union is empty; an empty intersection is
    everything."""
    dictionary = as_dictionary(dictionary)
    partition.check(len(dictionary))
    b = dictionary[true_index]

    def member(j, C):
        bt = dictionary[j]
        return _at_least(identifiability_gap(theta, theta0, b, bt), C * separation_radius(bt, epsilon), rtol)

    union = any(member(j, C1) for j in partition.homogeneous)
    inter = all(member(j, C2) for j in partition.rest)
    if not partition.homogeneous:
        return inter
    return union and inter


def separation_diagnostic(theta, theta0, b, bbar) -> dict:
    """Side-by-side values of the identifiability gap, the plain distance and
    the divergence term it is heuristically close to when the perturbation is
    small. Reported, never asserted."""
    from .rates import divergence

    theta, theta0 = as_signal(theta), as_signal(theta0)
    return {
        "identifiability_gap": identifiability_gap(theta, theta0, b, bbar),
        "distance_sq": math.fsum((theta.values - theta0.values) ** 2),
        "divergence": divergence(theta0, bbar, b),
    }


# -- adversarial prior ---------------------------------------------------------


@dataclass(frozen=True)
class AdversaryConfig:
    alpha: float
    beta: float
    tau: float
    gamma: float
    C2_observed: float
    R_squared: float

    def __post_init__(self):
        if not self.alpha + self.beta < 1:
            raise DomainError("the adversarial prior needs alpha + beta < 1")
        if not 0 <= self.tau <= 1:
            raise DomainError(f"tau must lie in [0, 1], got {self.tau!r}")
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma!r}")

    @property
    def c2_lower(self) -> float:
        """Radius constant met with equality by every draw, ``tau**2 sqrt(ln C_ab)``."""
        return self.tau**2 * math.sqrt(math.log(second_moment_cap(self.alpha, self.beta)))


@dataclass(frozen=True)
class AdversarialDraw:
    theta: SignalSequence
    omega: np.ndarray
    config: AdversaryConfig


def prior_radius_sq(b_bar, epsilon: float, alpha: float, beta: float) -> float:
    """``R**2 = sqrt(ln C_ab) * separation_radius(bbar)``."""
    if not alpha + beta < 1:
        raise DomainError("the adversarial prior needs alpha + beta < 1 (otherwise ln C_ab <= 0)")
    return math.sqrt(math.log(second_moment_cap(alpha, beta))) * separation_radius(b_bar, epsilon)


def _perturbation_scale(b_bar, epsilon, alpha, beta, tau) -> np.ndarray:
    bb = as_spectrum(b_bar).values
    R = math.sqrt(prior_radius_sq(b_bar, epsilon, alpha, beta))
    return tau * R / bb / math.sqrt(math.fsum(bb**-4.0))


def _check_prior_args(theta0, b, b_bar, tau):
    theta0, b, b_bar = as_signal(theta0), as_spectrum(b), as_spectrum(b_bar)
    check_lengths(("theta0", theta0), ("b", b), ("b_bar", b_bar))
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    if np.any(b.values < MIN_SPECTRUM_VALUE):
        raise DomainError(f"spectrum entries below {MIN_SPECTRUM_VALUE} cannot be inverted safely")
    return theta0, b, b_bar


def adversarial_draw(
    theta0,
    b,
    b_bar,
    epsilon: float,
    alpha: float,
    beta: float,
    tau: float,
    seed: int,
    draw: int = 0,
    gamma: float = 0.5,
    C2_observed: float | None = None,
) -> AdversarialDraw:
    """One sample from the sign-perturbation prior (signs from stream ``draw``).

    ``gamma`` and ``C2_observed`` only annotate the attached config; when
    ``C2_observed`` is None it is computed from the pair ``(b, b_bar)``.
    """
    from .rates import divergence

    theta0, b, b_bar = _check_prior_args(theta0, b, b_bar, tau)
    omega = rademacher_stream(seed, draw, theta0.m)
    omega.setflags(write=False)
    shift = omega * _perturbation_scale(b_bar, epsilon, alpha, beta, tau)
    theta = (b_bar.values * theta0.values + shift) / b.values
    if C2_observed is None:
        C2_observed = divergence(theta0, b, b_bar) / separation_radius(b, epsilon)
    config = AdversaryConfig(
        alpha=alpha,
        beta=beta,
        tau=tau,
        gamma=gamma,
        C2_observed=C2_observed,
        R_squared=prior_radius_sq(b_bar, epsilon, alpha, beta),
    )
    return AdversarialDraw(theta=SignalSequence(theta), omega=omega, config=config)


def _lambda_sq(b_bar, epsilon, alpha, beta, tau) -> np.ndarray:
    bb = as_spectrum(b_bar).values
    R2 = prior_radius_sq(b_bar, epsilon, alpha, beta)
    return tau**2 * R2 * bb**-2.0 / (epsilon**2 * math.fsum(bb**-4.0))


def lr_second_moment_closed(theta0, b_bar, epsilon: float, alpha: float, beta: float, tau: float) -> float:
    """Exact ``E[L**2]`` under the null image ``bbar * theta0``: ``prod_k cosh(lambda_k**2)``.

    Follows from ``E[cosh**2(lambda Z)] = exp(lambda**2) cosh(lambda**2)`` for a
    standard normal ``Z``. The value does not depend on ``theta0``.
    """
    theta0 = as_signal(theta0)
    check_lengths(("theta0", theta0), ("b_bar", as_spectrum(b_bar)))
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    lam2 = _lambda_sq(b_bar, epsilon, alpha, beta, tau)
    return float(math.exp(math.fsum(np.log(np.cosh(lam2)))))


def lr_second_moment_cosh_squared(theta0, b_bar, epsilon, alpha, beta, tau) -> float:
    """``prod_k cosh(lambda_k**2)**2``, an upper bound on the exact second moment."""
    return lr_second_moment_closed(theta0, b_bar, epsilon, alpha, beta, tau) ** 2


def lr_second_moment_exp_bound(b_bar, epsilon, alpha, beta, tau) -> float:
    """``exp(tau**4 R**4 / (eps**4 sum bbar**-4))``, from ``cosh(x) <= exp(x**2/2)``."""
    bb = as_spectrum(b_bar).values
    R2 = prior_radius_sq(b_bar, epsilon, alpha, beta)
    return math.exp(tau**4 * R2**2 / (epsilon**4 * math.fsum(bb**-4.0)))


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    se: float
    n: int
    seed: int
    inner: str

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - 4 * self.se, self.mean + 4 * self.se


def lr_second_moment_mc(
    theta0,
    b,
    b_bar,
    epsilon: float,
    alpha: float,
    beta: float,
    tau: float,
    N: int,
    seed: int,
    inner: str = "auto",
    inner_draws: int = 4096,
    chunk: int = 8192,
) -> MomentEstimate:
    """Monte Carlo ``E_{theta0, bbar}[L_mu(y)**2]`` straight from Gaussian densities.

    Outer draws ``y ~ N(bbar theta0, eps**2 I)``. The prior average inside
    ``L_mu`` runs over all ``2**m`` sign vectors when ``inner="exact"`` (or
    ``"auto"`` with ``m <= 20``), otherwise over ``inner_draws`` sampled sign
    vectors. Each sign vector is turned into ``theta`` and then back into the
    mean ``b theta`` of the likelihood, so no closed-form shortcut is involved.
    """
    theta0, b, b_bar = _check_prior_args(theta0, b, b_bar, tau)
    if N < 1:
        raise DomainError("N must be at least 1")
    m = theta0.m
    if inner == "auto":
        inner = "exact" if m <= ENUMERATION_CAP else "sampled"
    if inner == "exact":
        if m > ENUMERATION_CAP:
            raise ResourceCapError(f"exact sign enumeration is capped at m={ENUMERATION_CAP}, got {m}")
        omegas = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
    elif inner == "sampled":
        omegas = np.vstack([rademacher_stream(seed, 1 + j, m) for j in range(inner_draws)])
    else:
        raise DomainError(f"unknown inner mode {inner!r}")

    scale = _perturbation_scale(b_bar, epsilon, alpha, beta, tau)
    thetas = (b_bar.values * theta0.values + omegas * scale) / b.values
    means = b.values * thetas                      # (n_omega, m)
    null_mean = b_bar.values * theta0.values       # (m,)

    xi = gaussian_stream(seed, 0, N * m).reshape(N, m)
    values = np.empty(N)
    for start in range(0, N, chunk):
        y = null_mean + epsilon * xi[start : start + chunk]
        # log of prod_k phi(y_k - mean_k) / phi(y_k - null_k), per (row, omega)
        diff = (y[:, None, :] - null_mean) ** 2 - (y[:, None, :] - means[None, :, :]) ** 2
        log_ratio = diff.sum(axis=2) / (2 * epsilon**2)
        log_L = logsumexp(log_ratio, axis=1) - math.log(len(omegas))
        values[start : start + chunk] = np.exp(2 * log_L)
    return MomentEstimate(
        mean=float(values.mean()),
        se=float(values.std(ddof=1) / math.sqrt(N)) if N > 1 else float("nan"),
        n=N,
        seed=seed,
        inner=inner,
    )


# -- feasibility ---------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityCertificate:
    passed: bool
    margin: float
    lhs: float
    rhs: float
    tau: float
    gamma: float
    C2_observed: float


def feasibility_certificate(C2_observed: float, alpha: float, beta: float, tau: float, gamma: float) -> FeasibilityCertificate:
    """Check that every prior draw lands in the plain detection set.

    Tests ``(1-gamma) C2 + (1 - 1/gamma) tau**2 sqrt(ln C_ab) > C1``; ``C2`` is
    the observed ratio of the divergence between the two members to the
    separation radius of the true one.
    """
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma!r}")
    if not 0 <= tau <= 1:
        raise DomainError(f"tau must lie in [0, 1], got {tau!r}")
    if not alpha + beta < 1:
        raise DomainError("feasibility needs alpha + beta < 1")
    if C2_observed < 0:
        raise DomainError("C2_observed must be non-negative")
    c2 = tau**2 * math.sqrt(math.log(second_moment_cap(alpha, beta)))
    lhs = (1 - gamma) * C2_observed + (1 - 1 / gamma) * c2
    rhs = detection_constant(alpha, beta)
    return FeasibilityCertificate(lhs > rhs, lhs - rhs, lhs, rhs, tau, gamma, C2_observed)


def search_feasibility(
    C2_observed: float,
    alpha: float,
    beta: float,
    gammas=None,
    taus=None,
    objective: str = "margin",
) -> FeasibilityCertificate:
    """Best certificate over a ``(gamma, tau)`` grid.

    ``objective="margin"`` maximises the margin; ``"tau"`` picks the largest
    feasible ``tau`` (the strongest lower-bound radius), then the best margin.
    Returns the best failing certificate if nothing on the grid passes.
    """
    gammas = np.round(np.arange(1, 20) * 0.05, 10) if gammas is None else gammas
    taus = np.round(np.arange(1, 101) * 0.01, 10) if taus is None else taus
    certs = [
        feasibility_certificate(C2_observed, alpha, beta, float(t), float(g)) for g in gammas for t in taus
    ]
    if objective == "margin":
        key = lambda c: c.margin
    elif objective == "tau":
        key = lambda c: (c.passed, c.tau if c.passed else 0.0, c.margin)
    else:
        raise DomainError(f"unknown objective {objective!r}")
    return max(certs, key=key)
