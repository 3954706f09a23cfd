"""Chi-square type goodness-of-fit tests and their aggregations over a dictionary.

A single test compares ``T = sum_k (y_k / bbar_k - theta0_k)**2`` with the
threshold ``eps**2 sum bbar**-2 + c_alpha eps**2 sqrt(sum bbar**-4)`` and
rejects on strict exceedance. Aggregates combine single tests by max (any
rejection rejects) or min (all must reject):

* ``bonferroni``: max over the dictionary, each test at ``alpha/2``;
* ``min``: min over the dictionary, each test at ``alpha``;
* ``mixed``: min of a Bonferroni block over a homogeneous part (level
  ``alpha/|B_H|`` each) and the single tests on the remaining members;
* ``adaptive``: max of ``mixed`` over every homogeneous part, each at level
  ``alpha/|parts|``.

Every procedure is a small tree of single tests, evaluated on a batch of
observations at once; the single-observation helpers are the one-row case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError
from .model import (
    Dictionary,
    OperatorSpectrum,
    SignalSequence,
    as_dictionary,
    as_observation,
    as_signal,
    as_spectrum,
    check_lengths,
)
from .rates import Partition, find_homogeneous_partitions, threshold_constant

TEST_KINDS = ("single", "bonferroni", "min", "mixed", "adaptive")


def _statistic_rows(Y: np.ndarray, bbar: np.ndarray, theta0: np.ndarray) -> np.ndarray:
    # shared by the single and batch paths so both give bit-identical decisions
    return ((Y / bbar - theta0) ** 2).sum(axis=1)


def statistic(y, candidate, theta0) -> float:
    """``sum_k (y_k / bbar_k - theta0_k)**2``."""
    y = as_observation(y)
    candidate, theta0 = as_spectrum(candidate), as_signal(theta0)
    check_lengths(("y", y), ("candidate", candidate), ("theta0", theta0))
    return float(_statistic_rows(y.y[None, :], candidate.values, theta0.values)[0])


def threshold(alpha: float, candidate, epsilon: float) -> float:
    b = as_spectrum(candidate).values
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    e2 = epsilon**2
    return e2 * math.fsum(b**-2.0) + threshold_constant(alpha) * e2 * math.sqrt(math.fsum(b**-4.0))


@dataclass(frozen=True)
class TestSpec:
    """One candidate test: level, candidate spectrum, null signal and threshold."""

    __test__ = False

    alpha: float
    candidate: OperatorSpectrum
    theta0: SignalSequence
    epsilon: float
    threshold: float
    threshold_offset: float = 0.0


@dataclass(frozen=True)
class Component:
    """Outcome of one single test inside an aggregate."""

    candidate_index: int
    level: float
    statistic: float
    threshold: float
    decision: int


@dataclass(frozen=True)
class TestVerdict:
    """Binary outcome (1 = reject) plus every single test that fed into it.

    ``statistic`` and ``threshold`` are set for single tests only. ``branches``
    holds intermediate decisions: the two halves of a mixed test, or one mixed
    decision per homogeneous part for the adaptive test.
    """

    __test__ = False

    decision: int
    test_name: str
    components: tuple[Component, ...]
    statistic: float | None = None
    threshold: float | None = None
    branches: tuple[int, ...] = ()

    @property
    def candidate_decisions(self) -> tuple[int, ...]:
        return tuple(c.decision for c in self.components)


def make_single_test(alpha: float, candidate, theta0, epsilon: float, threshold_offset: float = 0.0) -> TestSpec:
    """Build the level-``alpha`` test for ``candidate``.

    ``threshold_offset`` is added to the threshold as-is; it exists for
    experiments with bias-corrected thresholds and carries no level guarantee.
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    candidate, theta0 = as_spectrum(candidate), as_signal(theta0)
    check_lengths(("candidate", candidate), ("theta0", theta0))
    return TestSpec(
        alpha=float(alpha),
        candidate=candidate,
        theta0=theta0,
        epsilon=float(epsilon),
        threshold=threshold(alpha, candidate, epsilon) + threshold_offset,
        threshold_offset=float(threshold_offset),
    )


def run_single(spec: TestSpec, y) -> TestVerdict:
    t = statistic(y, spec.candidate, spec.theta0)
    d = int(t > spec.threshold)
    return TestVerdict(
        decision=d,
        test_name="single",
        components=(Component(0, spec.alpha, t, spec.threshold, d),),
        statistic=t,
        threshold=spec.threshold,
    )


# -- aggregation trees -------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    index: int
    level: float


@dataclass(frozen=True)
class Node:
    op: str  # "max" | "min"
    children: tuple["Leaf | Node", ...]


def _leaves(rule) -> list[Leaf]:
    if isinstance(rule, Leaf):
        return [rule]
    return [leaf for child in rule.children for leaf in _leaves(child)]


class Procedure:
    """A fixed aggregation of single tests, reusable across many observations."""

    def __init__(self, name: str, rule, dictionary: Dictionary, theta0, epsilon: float):
        self.name = name
        self.rule = rule
        self.dictionary = dictionary
        self.theta0 = as_signal(theta0)
        self.epsilon = float(epsilon)
        check_lengths(("theta0", self.theta0), ("dictionary members", dictionary[0]))
        self.leaves = _leaves(rule)
        self.indices = sorted({leaf.index for leaf in self.leaves})
        self._thresholds = {
            (leaf.index, leaf.level): threshold(leaf.level, dictionary[leaf.index], epsilon)
            for leaf in self.leaves
        }

    def __repr__(self):
        return f"Procedure({self.name!r}, leaves={len(self.leaves)})"

    def statistics(self, Y: np.ndarray) -> dict[int, np.ndarray]:
        """Per-candidate statistics for each row of ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.dictionary.m:
            raise DimensionError(f"observations have length {Y.shape[1]}, expected {self.dictionary.m}")
        th0 = self.theta0.values
        return {j: _statistic_rows(Y, self.dictionary[j].values, th0) for j in self.indices}

    def _eval(self, rule, T):
        if isinstance(rule, Leaf):
            return T[rule.index] > self._thresholds[(rule.index, rule.level)]
        parts = [self._eval(c, T) for c in rule.children]
        combine = np.logical_or if rule.op == "max" else np.logical_and
        out = parts[0]
        for p in parts[1:]:
            out = combine(out, p)
        return out

    def decide(self, Y: np.ndarray) -> np.ndarray:
        """Decisions (bool, True = reject) for each row of ``Y``."""
        return self._eval(self.rule, self.statistics(Y))

    def verdict(self, y) -> TestVerdict:
        y = as_observation(y)
        T = self.statistics(y.y[None, :])
        comps = []
        for leaf in self.leaves:
            t = float(T[leaf.index][0])
            thr = self._thresholds[(leaf.index, leaf.level)]
            comps.append(Component(leaf.index, leaf.level, t, thr, int(t > thr)))
        branches = ()
        if isinstance(self.rule, Node):
            branches = tuple(int(self._eval(c, T)[0]) for c in self.rule.children)
        single = isinstance(self.rule, Leaf)
        return TestVerdict(
            decision=int(self._eval(self.rule, T)[0]),
            test_name=self.name,
            components=tuple(comps),
            statistic=comps[0].statistic if single else None,
            threshold=comps[0].threshold if single else None,
            branches=branches,
        )


def _node(op: str, children: Sequence) -> "Leaf | Node":
    children = tuple(children)
    return children[0] if len(children) == 1 else Node(op, children)


def _mixed_rule(alpha: float, partition: Partition):
    h, r = partition.homogeneous, partition.rest
    branches = []
    if h:
        branches.append(_node("max", [Leaf(i, alpha / len(h)) for i in h]))
    if r:
        branches.append(_node("min", [Leaf(i, alpha) for i in r]))
    if not branches:
        raise ConfigurationError("partition is empty")
    return Node("min", tuple(branches)) if len(branches) > 1 else branches[0]


def build_procedure(
    kind: str,
    alpha: float,
    dictionary,
    theta0,
    epsilon: float,
    partition: Partition | None = None,
    candidate_index: int = 0,
) -> Procedure:
    """Construct one of :data:`TEST_KINDS` over ``dictionary``.

    ``partition`` is used by ``mixed`` (default: the largest homogeneous part);
    ``candidate_index`` selects the spectrum for ``single``.
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    dictionary = as_dictionary(dictionary)
    K = len(dictionary)
    if kind == "single":
        if not 0 <= candidate_index < K:
            raise ConfigurationError(f"candidate_index {candidate_index} out of range for {K} members")
        rule = Leaf(candidate_index, alpha)
    elif kind == "bonferroni":
        rule = _node("max", [Leaf(i, alpha / 2) for i in range(K)])
    elif kind == "min":
        rule = _node("min", [Leaf(i, alpha) for i in range(K)])
    elif kind == "mixed":
        if partition is None:
            partition = find_homogeneous_partitions(dictionary, theta0, epsilon)[0]
        rule = _mixed_rule(alpha, partition.check(K))
    elif kind == "adaptive":
        parts = find_homogeneous_partitions(dictionary, theta0, epsilon)
        level = alpha / len(parts)
        rule = Node("max", tuple(_mixed_rule(level, p) for p in parts))
        if len(parts) == 1:
            rule = rule.children[0]
    else:
        raise ConfigurationError(f"unknown test kind {kind!r}; expected one of {TEST_KINDS}")
    return Procedure(kind, rule, dictionary, theta0, epsilon)


def bonferroni_test(alpha: float, dictionary, theta0, epsilon: float, y) -> TestVerdict:
    """Reject if any candidate test at level ``alpha/2`` rejects."""
    return build_procedure("bonferroni", alpha, dictionary, theta0, epsilon).verdict(y)


def min_test(alpha: float, dictionary, theta0, epsilon: float, y) -> TestVerdict:
    """Reject only if every candidate test at level ``alpha`` rejects."""
    return build_procedure("min", alpha, dictionary, theta0, epsilon).verdict(y)


def mixed_test(alpha: float, dictionary, partition: Partition, theta0, epsilon: float, y) -> TestVerdict:
    """Min of the Bonferroni block on ``partition.homogeneous`` and the level-``alpha``
    tests on ``partition.rest``; an empty part drops out."""
    return build_procedure("mixed", alpha, dictionary, theta0, epsilon, partition=partition).verdict(y)


def adaptive_test(alpha: float, dictionary, theta0, epsilon: float, y) -> TestVerdict:
    return build_procedure("adaptive", alpha, dictionary, theta0, epsilon).verdict(y)
