"""Sequence-space data types and the seeded Gaussian regression sampler.

Observations follow ``y_k = b_k * theta_k + eps * xi_k`` for ``k = 1..m``.

Random numbers come from replication-indexed substreams. Stream ``i`` under
master seed ``s`` is ``PCG64(SeedSequence(s, spawn_key=(tag, i)))`` where
``tag`` is 0 for Gaussian variates and 1 for Rademacher signs. Gaussian
variates use ``numpy.random.Generator.standard_normal`` (ziggurat). Because a
replication only ever touches its own substream, results do not depend on how
replications are scheduled across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

GAUSSIAN_TAG = 0
RADEMACHER_TAG = 1
_U64 = 2**64


def _vector(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{what} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SignalSequence:
    """Finite signal coefficients (theta or theta0)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _vector(self.values, "signal"))

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SignalSequence):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    @property
    def m(self) -> int:
        return self.values.size

    def squared_norm(self) -> float:
        return math.fsum(self.values**2)

    @classmethod
    def zeros(cls, m: int) -> "SignalSequence":
        return cls(np.zeros(m))


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    """Singular values ``b_1 >= ... >= b_m > 0`` of the (unknown) operator.

    Ties are allowed so constant spectra are valid.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _vector(self.values, "spectrum")
        if np.any(arr <= 0):
            raise DomainError("spectrum entries must be strictly positive")
        if np.any(np.diff(arr) > 0):
            k = int(np.argmax(np.diff(arr) > 0))
            raise DomainError(
                f"spectrum must be non-increasing (b[{k}]={arr[k]!r} < b[{k + 1}]={arr[k + 1]!r})"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, OperatorSpectrum):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    @property
    def m(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Dictionary:
    """Ordered, finite collection of candidate spectra sharing one length."""

    members: tuple[OperatorSpectrum, ...]

    def __post_init__(self):
        members = tuple(as_spectrum(b) for b in self.members)
        if not members:
            raise DimensionError("dictionary must contain at least one spectrum")
        m = members[0].m
        for j, b in enumerate(members):
            if b.m != m:
                raise DimensionError(f"member {j} has length {b.m}, expected {m}")
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if members[i] == members[j]:
                    raise DomainError(f"members {i} and {j} are identical")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_arrays(cls, arrays: Iterable[Any], deduplicate: bool = False) -> "Dictionary":
        members: list[OperatorSpectrum] = []
        for a in arrays:
            b = as_spectrum(a)
            if deduplicate and any(b == c for c in members):
                continue
            members.append(b)
        return cls(tuple(members))

    def __len__(self):
        return len(self.members)

    def __getitem__(self, j):
        return self.members[j]

    def __iter__(self):
        return iter(self.members)

    @property
    def m(self) -> int:
        return self.members[0].m

    def matrix(self) -> np.ndarray:
        """Members stacked as rows, shape ``(|B|, m)``."""
        return np.vstack([b.values for b in self.members])


@dataclass(frozen=True)
class NoiseModel:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon!r}")
        check_seed(self.seed)


@dataclass(frozen=True, eq=False)
class Observation:
    y: np.ndarray
    provenance: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "y", _vector(self.y, "observation"))

    def __len__(self):
        return self.y.size

    def __array__(self, dtype=None, copy=None):
        return self.y if dtype is None else self.y.astype(dtype)


def as_signal(x) -> SignalSequence:
    return x if isinstance(x, SignalSequence) else SignalSequence(x)


def as_spectrum(x) -> OperatorSpectrum:
    return x if isinstance(x, OperatorSpectrum) else OperatorSpectrum(x)


def as_dictionary(x) -> Dictionary:
    if isinstance(x, Dictionary):
        return x
    return Dictionary.from_arrays(x)


def as_observation(x) -> Observation:
    return x if isinstance(x, Observation) else Observation(x)


def check_lengths(*pairs: tuple[str, Sequence]) -> int:
    """Raise DimensionError unless every named sequence has the same length."""
    lengths = {name: len(seq) for name, seq in pairs}
    if len(set(lengths.values())) > 1:
        desc = ", ".join(f"{k}={v}" for k, v in lengths.items())
        raise DimensionError(f"length mismatch: {desc}")
    return next(iter(lengths.values()))


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < _U64:
        raise DomainError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the substream ``key`` of master ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit child seed, used to give dictionary members disjoint streams."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gaussian_stream(seed: int, stream_id: int, count: int) -> np.ndarray:
    """``count`` i.i.d. standard normal variates from substream ``stream_id``."""
    if count < 0:
        raise DomainError("count must be non-negative")
    if stream_id < 0:
        raise DomainError("stream_id must be non-negative")
    return substream(seed, GAUSSIAN_TAG, stream_id).standard_normal(count)


def rademacher_stream(seed: int, stream_id: int, count: int) -> np.ndarray:
    """``count`` i.i.d. signs in {-1, +1} with equal probability."""
    if count < 0:
        raise DomainError("count must be non-negative")
    bits = substream(seed, RADEMACHER_TAG, stream_id).integers(0, 2, size=count)
    return 2.0 * bits - 1.0


def noise_rows(seed: int, start: int, stop: int, m: int) -> np.ndarray:
    """Rows ``start..stop-1`` of the replication noise matrix (one stream per row)."""
    out = np.empty((stop - start, m))
    for r, i in enumerate(range(start, stop)):
        out[r] = gaussian_stream(seed, i, m)
    return out


def sample_observation(theta, b, noise: NoiseModel, replication: int = 0) -> Observation:
    """Draw ``y = b * theta + eps * xi`` with xi from stream ``replication``.

    Identical arguments give bit-identical output; the signal enters additively,
    so two calls differing only in ``theta`` share the same noise realization.
    """
    theta = as_signal(theta)
    b = as_spectrum(b)
    m = check_lengths(("theta", theta), ("b", b))
    xi = gaussian_stream(noise.seed, replication, m)
    y = b.values * theta.values + noise.epsilon * xi
    return Observation(
        y,
        provenance={
            "theta": theta.values.tolist(),
            "b": b.values.tolist(),
            "epsilon": noise.epsilon,
            "seed": noise.seed,
            "replication": replication,
        },
    )


def polynomial_spectrum(m: int, decay: float, scale: float = 1.0) -> OperatorSpectrum:
    """``b_k = scale * k**(-decay)``, the usual mildly ill-posed family."""
    k = np.arange(1, m + 1, dtype=float)
    return OperatorSpectrum(scale * k ** (-float(decay)))
