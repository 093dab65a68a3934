"""Extended-precision arithmetic backends.

The exact formulas for sums of uniforms are alternating sums of high
powers and cancel badly in plain doubles. Everything in
:mod:`jitterinv.uniform_sum` and :mod:`jitterinv.inversion` is written
against a tiny arithmetic interface (``+ - * /``, integer powers and the
methods of :class:`Backend`) so the same code runs on

* ``float64`` numpy arrays,
* vectorized double-double numbers (:class:`DD`, ~106-bit significand),
* numpy object arrays of mpmath ``mpf`` at a configurable precision.

:func:`evaluate` runs a computation through a chain of these backends and
only escalates the elements whose a-priori error bound misses the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np

from .errors import PrecisionError

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


class DD:
    """Array of double-double numbers ``hi + lo`` with ``|lo| <= ulp(hi)/2``.

    Broadcasting follows numpy. Only what the analytic code needs is
    implemented.
    """

    __slots__ = ("hi", "lo")

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        if lo is None:
            self.lo = np.zeros_like(self.hi)
        else:
            self.lo = np.asarray(lo, dtype=np.float64)

    @staticmethod
    def _coerce(x) -> "DD":
        return x if isinstance(x, DD) else DD(x)

    @property
    def shape(self):
        return self.hi.shape

    def __getitem__(self, idx) -> "DD":
        return DD(self.hi[idx], self.lo[idx])

    def __neg__(self) -> "DD":
        return DD(-self.hi, -self.lo)

    def __add__(self, other) -> "DD":
        other = DD._coerce(other)
        s1, s2 = _two_sum(self.hi, other.hi)
        t1, t2 = _two_sum(self.lo, other.lo)
        s2 = s2 + t1
        s1, s2 = _quick_two_sum(s1, s2)
        s2 = s2 + t2
        return DD(*_quick_two_sum(s1, s2))

    __radd__ = __add__

    def __sub__(self, other) -> "DD":
        return self + (-DD._coerce(other))

    def __rsub__(self, other) -> "DD":
        return DD._coerce(other) + (-self)

    def __mul__(self, other) -> "DD":
        other = DD._coerce(other)
        p1, p2 = _two_prod(self.hi, other.hi)
        p2 = p2 + (self.hi * other.lo + self.lo * other.hi)
        return DD(*_quick_two_sum(p1, p2))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "DD":
        other = DD._coerce(other)
        q1 = self.hi / other.hi
        r = self - other * q1
        q2 = r.hi / other.hi
        r = r - other * q2
        q3 = r.hi / other.hi
        q1, q2 = _quick_two_sum(q1, q2)
        return DD(q1, q2) + q3

    def __rtruediv__(self, other) -> "DD":
        return DD._coerce(other) / self

    def __pow__(self, k: int) -> "DD":
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = DD(np.ones_like(self.hi))
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __float__(self) -> float:
        return float(self.hi + self.lo)

    def __repr__(self) -> str:
        return f"DD(hi={self.hi!r}, lo={self.lo!r})"

    def sum(self, axis: int = -1) -> "DD":
        """Pairwise double-double reduction along ``axis``."""
        hi = np.moveaxis(self.hi, axis, -1)
        lo = np.moveaxis(self.lo, axis, -1)
        if hi.shape[-1] == 0:
            return DD(np.zeros(hi.shape[:-1]))
        acc = DD(hi, lo)
        while acc.shape[-1] > 1:
            if acc.shape[-1] % 2:
                pad = [(0, 0)] * (acc.hi.ndim - 1) + [(0, 1)]
                acc = DD(np.pad(acc.hi, pad), np.pad(acc.lo, pad))
            acc = acc[..., 0::2] + acc[..., 1::2]
        return acc[..., 0]


class Backend:
    """One arithmetic flavour. ``unit`` is its relative rounding unit."""

    name = "abstract"
    unit = 0.0

    def lift(self, x):
        raise NotImplementedError

    def total(self, v, axis: int = -1):
        raise NotImplementedError

    def where(self, mask, a, b):
        raise NotImplementedError

    def to_float(self, v) -> np.ndarray:
        raise NotImplementedError

    def atleast_1d(self, v):
        return np.atleast_1d(v)

    def positive(self, v) -> np.ndarray:
        """Boolean mask of ``v > 0``."""
        return self.to_float(v) > 0.0


class Float64Backend(Backend):
    name = "float64"
    unit = 2.0**-53

    def lift(self, x):
        return np.asarray(x, dtype=np.float64)

    def total(self, v, axis=-1):
        return np.sum(v, axis=axis)

    def where(self, mask, a, b):
        return np.where(mask, a, b)

    def to_float(self, v):
        return np.asarray(v, dtype=np.float64)


class DoubleDoubleBackend(Backend):
    name = "double-double"
    unit = 2.0**-104

    def lift(self, x):
        return DD(x)

    def total(self, v, axis=-1):
        return v.sum(axis=axis)

    def where(self, mask, a, b):
        a = DD._coerce(a)
        b = DD._coerce(b)
        return DD(np.where(mask, a.hi, b.hi), np.where(mask, a.lo, b.lo))

    def to_float(self, v):
        v = DD._coerce(v)
        return v.hi + v.lo

    def atleast_1d(self, v):
        v = DD._coerce(v)
        return DD(np.atleast_1d(v.hi), np.atleast_1d(v.lo))

    def positive(self, v):
        # normalized: the sign of hi is the sign of the value
        return DD._coerce(v).hi > 0.0


class MPBackend(Backend):
    """numpy object arrays of ``mpf`` from a private mpmath context."""

    def __init__(self, dps: int):
        self.ctx = mpmath.MPContext()
        self.ctx.dps = dps
        self.dps = dps
        self.name = f"mpmath-{dps}"
        self.unit = 2.0 ** -(self.ctx.prec - 1)
        self._mpf = np.frompyfunc(self.ctx.mpf, 1, 1)
        self._float = np.frompyfunc(float, 1, 1)

    def lift(self, x):
        arr = np.asarray(x)
        if arr.dtype == object:
            return self._mpf(arr)
        return self._mpf(arr.astype(np.float64))

    def atleast_1d(self, v):
        return np.atleast_1d(np.asarray(v, dtype=object))

    def total(self, v, axis=-1):
        v = np.asarray(v, dtype=object)
        if v.shape[axis] == 0:
            return self.lift(np.zeros(np.delete(v.shape, axis % v.ndim)))
        return np.sum(v, axis=axis)

    def where(self, mask, a, b):
        return np.where(mask, np.asarray(a, dtype=object), np.asarray(b, dtype=object))

    def to_float(self, v):
        return np.asarray(self._float(np.asarray(v, dtype=object)), dtype=np.float64)


FLOAT64 = Float64Backend()
DOUBLE_DOUBLE = DoubleDoubleBackend()


@dataclass(frozen=True)
class PrecisionPolicy:
    """Accuracy contract for the exact formulas.

    ``arithmetic`` selects the first backend tried; elements whose error
    bound exceeds ``rel_tol`` relative to their value are recomputed with
    mpmath at ``fallback_dps`` digits (``None`` disables the fallback, in
    which case :class:`PrecisionError` is raised instead). Elements that
    still miss get further mpmath passes with as many extra digits as the
    observed shortfall asks for, up to ``max_dps``.
    """

    rel_tol: float = 1e-9
    arithmetic: str = "double-double"
    fallback_dps: int | None = 60
    max_dps: int = 1000

    def __post_init__(self):
        if self.arithmetic not in ("float64", "double-double", "mpmath"):
            raise ValueError(f"unknown arithmetic {self.arithmetic!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.fallback_dps is not None and not 15 <= self.fallback_dps <= self.max_dps:
            raise ValueError("need 15 <= fallback_dps <= max_dps")

    def chain(self) -> list[Backend]:
        dps = self.fallback_dps or 60
        first = {
            "float64": FLOAT64,
            "double-double": DOUBLE_DOUBLE,
            "mpmath": None,
        }[self.arithmetic]
        backends = [first] if first is not None else [MPBackend(dps)]
        if self.fallback_dps is not None and first is not None:
            backends.append(MPBackend(self.fallback_dps))
        return backends


DEFAULT_POLICY = PrecisionPolicy()


def rounding_factor(ops: int, terms: int) -> float:
    """Multiplier on ``unit * sum(|term|)`` bounding the rounding error.

    ``ops`` roundings per term plus a pairwise summation over ``terms``
    terms, doubled for slack.
    """
    depth = math.ceil(math.log2(terms)) if terms > 1 else 0
    return 2.0 * (ops + depth + 2)


def evaluate(
    compute: Callable[[Backend, np.ndarray], tuple[np.ndarray, np.ndarray]],
    size: int,
    policy: PrecisionPolicy = DEFAULT_POLICY,
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Evaluate ``size`` independent quantities under ``policy``.

    ``compute(backend, idx)`` returns float values and absolute error
    bounds for the elements ``idx``. Elements that miss the relative
    tolerance are retried on the next backend of the chain.

    Returns values, error bounds and the backend name used per element.
    """
    values = np.zeros(size)
    errors = np.zeros(size)
    used = [""] * size
    idx = np.arange(size)
    chain = policy.chain()
    tried = []

    def attempt(backend):
        nonlocal idx
        tried.append(backend.name)
        vals, errs = compute(backend, idx)
        vals = np.asarray(vals, dtype=np.float64)
        errs = np.asarray(errs, dtype=np.float64)
        values[idx] = vals
        errors[idx] = errs
        for i in idx:
            used[i] = backend.name
        bad = ~(errs <= policy.rel_tol * np.abs(vals))
        # an exact zero with a zero bound is fine
        bad &= ~((errs == 0.0) & (vals == 0.0))
        idx = idx[bad]

    for backend in chain:
        if idx.size == 0:
            break
        attempt(backend)
    # tiny values (e.g. near-tangent supports) can need far more digits
    last = chain[-1]
    while idx.size and isinstance(last, MPBackend) and policy.fallback_dps is not None:
        with np.errstate(divide="ignore"):
            ratio = errors[idx] / (policy.rel_tol * np.abs(values[idx]))
        shortfall = float(np.max(np.log10(ratio)))
        extra = 2 * last.dps if not math.isfinite(shortfall) else math.ceil(shortfall) + 10
        dps = min(last.dps + extra, policy.max_dps)
        if dps <= last.dps:
            break
        last = MPBackend(dps)
        attempt(last)
    if idx.size:
        worst = float(np.max(errors[idx] / np.maximum(np.abs(values[idx]), 1e-300)))
        raise PrecisionError(
            f"{idx.size} value(s) missed relative accuracy {policy.rel_tol:g} "
            f"(worst estimate {worst:.3g}) with arithmetic chain "
            f"{tried}"
        )
    return values, errors, used
