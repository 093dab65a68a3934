"""Exact distribution of a sum of independent, non-identical uniforms.

For ``n`` hops with delays ``U(a_i, b_i)`` the density and distribution
function are inclusion-exclusion sums over all ``2**n`` subsets of the
hop widths ``l_i = b_i - a_i``::

    h(x) = sum_j (-1)**|w_j| (x - A - s_j)**(n-1) / ((n-1)! prod l_i)
    H(x) = sum_j (-1)**|w_j| (x - A - s_j)**n     / (n!     prod l_i)

where ``A = sum a_i``, ``s_j`` is the sum of the widths selected by the
0/1 vector ``w_j`` and only subsets with ``A + s_j < x`` take part.

Evaluation uses the backends of :mod:`jitterinv.precision`. The density
is symmetric about the midpoint of its support, so points in the upper
half are reflected into the lower half, where fewer subsets contribute
and cancellation is milder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DegenerateIntervalError, ValidationError
from .precision import DEFAULT_POLICY, Backend, PrecisionPolicy, evaluate, rounding_factor

DEFAULT_MAX_HOPS = 16

# elements per (points x subsets) block handed to a backend at once
_BLOCK = 1 << 18


@dataclass(frozen=True)
class UniformSpec:
    """Uniform per-hop delay on ``(lower, upper)`` in milliseconds."""

    lower: float
    upper: float

    def __post_init__(self):
        lower, upper = float(self.lower), float(self.upper)
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ValidationError(f"interval bounds must be finite, got ({lower}, {upper})")
        if lower < 0:
            raise ValidationError(f"jitter delays are non-negative, got lower={lower}")
        if upper == lower:
            raise DegenerateIntervalError(
                f"degenerate interval ({lower}, {upper}): upper must exceed lower"
            )
        if upper < lower:
            raise ValidationError(f"malformed interval ({lower}, {upper}): upper < lower")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class RouteDelayModel:
    """Ordered per-hop delay intervals of one route.

    ``sum_lower`` and ``sum_upper`` are the support ``(A_n, B_n)`` of the
    end-to-end delay.
    """

    hops: tuple[UniformSpec, ...]
    sum_lower: float = field(init=False)
    sum_upper: float = field(init=False)

    def __post_init__(self):
        hops = tuple(self.hops)
        if not hops:
            raise ValidationError("a route needs at least one hop")
        for h in hops:
            if not isinstance(h, UniformSpec):
                raise ValidationError(f"hops must be UniformSpec, got {type(h).__name__}")
        object.__setattr__(self, "hops", hops)
        object.__setattr__(self, "sum_lower", math.fsum(h.lower for h in hops))
        object.__setattr__(self, "sum_upper", math.fsum(h.upper for h in hops))

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "RouteDelayModel":
        return cls(tuple(UniformSpec(a, b) for a, b in intervals))

    @property
    def n(self) -> int:
        return len(self.hops)

    @property
    def lowers(self) -> np.ndarray:
        return np.array([h.lower for h in self.hops])

    @property
    def uppers(self) -> np.ndarray:
        return np.array([h.upper for h in self.hops])

    @property
    def lengths(self) -> np.ndarray:
        return self.uppers - self.lowers

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.sum_lower + self.sum_upper)

    def intervals(self) -> list[tuple[float, float]]:
        return [(h.lower, h.upper) for h in self.hops]

    def shifted(self, delta: float) -> "RouteDelayModel":
        return RouteDelayModel.from_intervals((a + delta, b + delta) for a, b in self.intervals())

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` end-to-end delays."""
        u = rng.random((size, self.n))
        return (self.lowers + u * self.lengths).sum(axis=1)


@dataclass(frozen=True)
class SubsetSumTable:
    """All ``2**n`` subset sums of the hop widths, sorted ascending.

    ``masks[j]`` is the bitmask of the hops in subset ``j`` and
    ``parities[j]`` its popcount. Equal sums stay distinct entries.
    """

    sums: np.ndarray
    parities: np.ndarray
    masks: np.ndarray

    def __len__(self) -> int:
        return len(self.sums)

    @property
    def entries(self) -> list[tuple[float, int]]:
        return [(float(s), int(p)) for s, p in zip(self.sums, self.parities)]

    def membership(self, n: int) -> np.ndarray:
        """Boolean ``(2**n, n)`` matrix, row ``j`` marks the hops of subset ``j``."""
        return ((self.masks[:, None] >> np.arange(n)) & 1).astype(bool)

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.parities % 2 == 0, 1.0, -1.0)


def _check_capacity(n: int, max_hops: int) -> None:
    if n > max_hops:
        raise CapacityError(
            f"{n} hops need 2**{n} subset terms; limit is {max_hops} hops "
            "(raise max_hops to override)"
        )


def subset_sums(lengths: Sequence[float], max_hops: int = DEFAULT_MAX_HOPS) -> SubsetSumTable:
    """Enumerate every 0/1 combination of ``lengths`` with its parity."""
    lengths = np.asarray(lengths, dtype=np.float64)
    if lengths.ndim != 1 or lengths.size == 0:
        raise ValidationError("need at least one hop length")
    n = lengths.size
    _check_capacity(n, max_hops)
    if not np.all(lengths > 0) or not np.all(np.isfinite(lengths)):
        raise ValidationError(f"hop lengths must be positive and finite, got {lengths.tolist()}")
    return _subset_sums_cached(tuple(lengths.tolist()))


@lru_cache(maxsize=256)
def _subset_sums_cached(lengths: tuple[float, ...]) -> SubsetSumTable:
    n = len(lengths)
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    sums = np.array([math.fsum(np.asarray(lengths)[row]) for row in bits])
    order = np.argsort(sums, kind="stable")
    table = SubsetSumTable(
        sums=sums[order], parities=bits.sum(axis=1)[order].astype(np.int64), masks=masks[order]
    )
    for arr in (table.sums, table.parities, table.masks):
        arr.setflags(write=False)
    return table


def table_for(model: RouteDelayModel, max_hops: int = DEFAULT_MAX_HOPS) -> SubsetSumTable:
    return subset_sums(model.lengths, max_hops=max_hops)


def rank(x: float, model: RouteDelayModel, table: SubsetSumTable | None = None) -> int:
    """Largest index ``j`` (1-based) with ``x - A_n - s_j > 0``; 0 if none."""
    if table is None:
        table = table_for(model)
    return int(np.count_nonzero(x - model.sum_lower - table.sums > 0))


def breakpoints(model: RouteDelayModel) -> np.ndarray:
    """Distinct kinks ``A_n + s_j`` of the density, ascending."""
    return np.unique(model.sum_lower + table_for(model).sums)


def subset_shifts(backend: Backend, lowers, uppers, membership: np.ndarray):
    """``A_n + s_j`` for every subset, computed from the interval ends.

    Built as ``sum(upper if in subset else lower)`` so no width is ever
    rounded. ``lowers``/``uppers`` may carry leading batch axes.
    """
    lo = backend.lift(np.asarray(lowers, dtype=np.float64)[..., None, :])
    up = backend.lift(np.asarray(uppers, dtype=np.float64)[..., None, :])
    return backend.total(backend.where(membership, up, lo), axis=-1)


def _terms_core(
    backend: Backend,
    model: RouteDelayModel,
    table: SubsetSumTable,
    x_b,
    x_f: np.ndarray,
    power: int,
):
    """Signed truncated-power sum ``sum_j sign_j (x - A - s_j)**power``.

    Points above the midpoint are reflected. Returns the normalized
    backend value (density or lower-tail probability of the reflected
    point), the float error bound and the reflection mask.
    """
    n = model.n
    lowers, uppers = model.lowers, model.uppers
    lo_b = backend.lift(lowers)
    up_b = backend.lift(uppers)
    total_ab = backend.total(lo_b) + backend.total(up_b)
    refl = x_f > model.midpoint
    xe = backend.where(refl, total_ab - x_b, x_b)
    p = subset_shifts(backend, lowers, uppers, table.membership(n))
    d = xe[:, None] - p[None, :]
    active = backend.positive(d)
    signs = table.signs
    term = backend.where(active, (d**power) * signs, 0.0)
    s = backend.total(term, axis=-1)
    widths = up_b - lo_b
    norm = backend.lift(float(math.factorial(power)))
    for i in range(n):
        norm = norm * widths[i]
    value = s / norm

    df = np.where(active, np.abs(backend.to_float(d)), 0.0)
    magnitude = np.sum(df**power, axis=-1)
    if power >= 1:
        sensitivity = power * np.sum(np.where(active, df ** (power - 1), 0.0), axis=-1)
    else:
        sensitivity = np.zeros(len(df))
    scale = np.sum(np.abs(lowers)) + np.sum(np.abs(uppers)) + np.abs(x_f)
    norm_f = float(math.factorial(power)) * float(np.prod(model.lengths))
    value_f = backend.to_float(value)
    err = backend.unit * (
        (rounding_factor(power + 3, len(signs)) * magnitude + scale * sensitivity) / norm_f
        + 4.0 * (n + 2) * np.abs(value_f)
    )
    return value, err, refl


def _eval_points(x, model: RouteDelayModel, policy: PrecisionPolicy, max_hops: int, kind: str):
    x_arr = np.asarray(x, dtype=np.float64)
    scalar = x_arr.ndim == 0
    xs = np.atleast_1d(x_arr).ravel()
    table = table_for(model, max_hops=max_hops)
    out = np.zeros(xs.shape)
    A, B = model.sum_lower, model.sum_upper
    if kind == "cdf":
        out[xs >= B] = 1.0
    inside = np.flatnonzero((xs > A) & (xs < B))
    power = model.n - 1 if kind == "pdf" else model.n
    block = max(1, _BLOCK >> model.n)

    def compute(backend: Backend, idx: np.ndarray):
        vals = np.empty(idx.size)
        errs = np.empty(idx.size)
        for start in range(0, idx.size, block):
            sel = idx[start : start + block]
            pts = xs[inside[sel]]
            value, err, refl = _terms_core(backend, model, table, backend.lift(pts), pts, power)
            v = backend.to_float(value)
            if kind == "cdf":
                v = np.where(refl, 1.0 - v, v)
            vals[start : start + block] = v
            errs[start : start + block] = err
        return vals, errs

    if inside.size:
        vals, _, _ = evaluate(compute, inside.size, policy)
        out[inside] = vals
    if kind == "cdf":
        out = np.clip(out, 0.0, 1.0)
    else:
        out = np.maximum(out, 0.0)
    out = out.reshape(np.shape(x_arr))
    return float(out) if scalar else out


def pdf(
    x,
    model: RouteDelayModel,
    policy: PrecisionPolicy = DEFAULT_POLICY,
    max_hops: int = DEFAULT_MAX_HOPS,
):
    """Density of the end-to-end delay at ``x`` (scalar or array, ms)."""
    return _eval_points(x, model, policy, max_hops, "pdf")


def cdf(
    x,
    model: RouteDelayModel,
    policy: PrecisionPolicy = DEFAULT_POLICY,
    max_hops: int = DEFAULT_MAX_HOPS,
):
    """Distribution function of the end-to-end delay at ``x`` (scalar or array, ms)."""
    return _eval_points(x, model, policy, max_hops, "cdf")


def cdf_backend(backend: Backend, model: RouteDelayModel, x_b, x_f: np.ndarray):
    """Distribution function at backend-valued points strictly inside the support.

    Used where the argument is itself an exact sum (e.g. another route's
    upper bound) and must not be rounded to a double first.
    Returns the backend value and a float error bound.
    """
    table = table_for(model)
    value, err, refl = _terms_core(backend, model, table, x_b, x_f, model.n)
    value = backend.where(refl, 1.0 - value, value)
    return value, err
