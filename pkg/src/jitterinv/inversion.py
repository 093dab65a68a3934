"""Probability of delay inversion between two jittered routes.

Route 1 (``n`` hops, the better route) suffers a delay inversion when its
end-to-end jitter exceeds that of route 2 (``m`` hops)::

    P(R1 > R2) = integral h_n(x) H_m(x) dx

Three independent ways of computing it live here:

* :func:`inversion_probability_closed_form` - the exact double sum over
  subset pairs, each term an elementary polynomial integral, plus the tail
  ``1 - H_n(B_m)`` when route 1 can outlast route 2 entirely;
* :func:`inversion_probability_quadrature` - Gauss-Legendre panels between
  the kinks of the integrand, refined until the panel estimates agree;
* :func:`inversion_probability_montecarlo` - counting strict wins of
  sampled route-1 delays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CapacityError, ConvergenceError, PrecisionError, ValidationError
from .precision import DEFAULT_POLICY, Backend, PrecisionPolicy, evaluate, rounding_factor
from .uniform_sum import (
    DEFAULT_MAX_HOPS,
    RouteDelayModel,
    breakpoints,
    cdf,
    cdf_backend,
    pdf,
    subset_shifts,
    table_for,
)

DEFAULT_MAX_COMBINED_HOPS = 20
CLAMP_TOL = 1e-9

# pair terms per backend block in the closed form
_PAIR_BLOCK = 1 << 17


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class InversionInstance:
    """Two competing routes; ``route1`` is the one that should win."""

    route1: RouteDelayModel
    route2: RouteDelayModel

    @classmethod
    def from_intervals(cls, r1: Sequence[Sequence[float]], r2: Sequence[Sequence[float]]):
        return cls(RouteDelayModel.from_intervals(r1), RouteDelayModel.from_intervals(r2))

    @property
    def n(self) -> int:
        return self.route1.n

    @property
    def m(self) -> int:
        return self.route2.n

    def swapped(self) -> "InversionInstance":
        return InversionInstance(self.route2, self.route1)


@dataclass(frozen=True)
class InversionResult:
    probability: float
    method: Method
    error_estimate: float
    detail: dict = field(default_factory=dict, compare=False)


def _check_capacity(n: int, m: int, max_hops: int, max_combined: int) -> None:
    if n > max_hops or m > max_hops:
        raise CapacityError(f"routes of {n} and {m} hops exceed the {max_hops}-hop limit")
    if n + m > max_combined:
        raise CapacityError(
            f"{n}+{m} hops need 2**{n + m} subset pairs; combined limit is {max_combined}"
        )


def normalization_constants(instance: InversionInstance) -> tuple[float, float]:
    """``1/((n-1)! prod l_i)`` for route 1 and ``1/(m! prod l_k)`` for route 2."""
    n, m = instance.n, instance.m
    _check_capacity(n, m, DEFAULT_MAX_HOPS, DEFAULT_MAX_COMBINED_HOPS)
    xi1 = 1.0 / (math.factorial(n - 1) * float(np.prod(instance.route1.lengths)))
    xi2 = 1.0 / (math.factorial(m) * float(np.prod(instance.route2.lengths)))
    return xi1, xi2


def hyp2f1_coefficients(m_param: int, n_param: int) -> list[Fraction]:
    """Exact coefficients of the terminating series 2F1(m+1, 1-n; m+2; z)."""
    if n_param < 1 or m_param < 1:
        raise ValidationError("both parameters must be positive integers")
    coeffs = [Fraction(1)]
    for k in range(n_param - 1):
        # ratio of consecutive terms: (m+1+k)(1-n+k) / ((m+2+k)(k+1))
        ratio = Fraction((m_param + 1 + k) * (1 - n_param + k), (m_param + 2 + k) * (k + 1))
        coeffs.append(coeffs[-1] * ratio)
    return coeffs


def truncated_2f1(m_param: int, n_param: int, z):
    """Polynomial 2F1(m+1, 1-n; m+2; z) of degree ``n-1`` (Horner).

    Works for float, :class:`~fractions.Fraction` and mpmath arguments;
    the result has the type of ``z`` arithmetic.
    """
    coeffs = hyp2f1_coefficients(m_param, n_param)
    if isinstance(z, float | int):
        coeffs = [float(c) for c in coeffs]
    elif hasattr(z, "context"):  # mpmath number
        coeffs = [z.context.mpf(c.numerator) / c.denominator for c in coeffs]
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * z + c
    return acc


def hypergeometric_antiderivative(n: int, m: int, shift1, shift2, x):
    """Antiderivative of ``(x-shift1)**(n-1) (x-shift2)**m`` in 2F1 form.

    ``2F1(m+1, 1-n; m+2; z) (shift2-shift1)**(n-1) (x-shift2)**(m+1) / (m+1)``
    with ``z = (x-shift2)/(shift1-shift2)``. When the shifts coincide the
    ratio is undefined and the limit ``(x-shift2)**(n+m) / (n+m)`` is used.
    Arithmetic follows the argument types (use mpmath or Fraction for
    exact comparisons).
    """
    if shift1 == shift2:
        return (x - shift2) ** (n + m) / (n + m)
    z = (x - shift2) / (shift1 - shift2)
    return truncated_2f1(m, n, z) * (shift2 - shift1) ** (n - 1) * (x - shift2) ** (m + 1) / (m + 1)


def _segment_terms(backend: Backend, n: int, m: int, p, q, lo, hi):
    """Binomial expansion of the integral of ``(x-p)**(n-1) (x-q)**m`` over ``[lo, hi]``.

    With ``y = x - q`` and ``D = q - p``::

        sum_i C(n-1, i) D**(n-1-i) (Y_hi**(i+m+1) - Y_lo**(i+m+1)) / (i+m+1)

    Returns the backend values and float arrays (magnitude, sensitivity)
    used by the error bound.
    """
    dd = q - p
    y_lo = lo - q
    y_hi = hi - q
    d_pows = [backend.lift(np.ones(backend.to_float(dd).shape))]
    for _ in range(n - 1):
        d_pows.append(d_pows[-1] * dd)
    yh = y_hi ** (m + 1)
    yl = y_lo ** (m + 1)
    total = None
    df = np.abs(backend.to_float(dd))
    yhf = np.abs(backend.to_float(y_hi))
    ylf = np.abs(backend.to_float(y_lo))
    magnitude = np.zeros(df.shape)
    sensitivity = np.zeros(df.shape)
    for i in range(n):
        a = n - 1 - i
        b = i + m + 1
        binom = math.comb(n - 1, i)
        coeff = binom / b
        piece = d_pows[a] * (yh - yl) * float(binom) / float(b)
        total = piece if total is None else total + piece
        mag_y = yhf**b + ylf**b
        magnitude += coeff * df**a * mag_y
        if a:
            sensitivity += coeff * a * df ** (a - 1) * mag_y
        sensitivity += coeff * b * df**a * (yhf ** (b - 1) + ylf ** (b - 1))
        if i < n - 1:
            yh = yh * y_hi
            yl = yl * y_lo
    return total, magnitude, sensitivity


def segment_integral(
    n: int,
    m: int,
    shift1: float,
    shift2: float,
    x_lo: float,
    x_hi: float,
    policy: PrecisionPolicy = DEFAULT_POLICY,
) -> float:
    """Exact integral of ``(x-shift1)**(n-1) (x-shift2)**m`` over ``[x_lo, x_hi]``.

    Returns 0 for an empty interval (``x_lo >= x_hi``).
    """
    if n < 1 or m < 0:
        raise ValidationError("need n >= 1 and m >= 0")
    if not x_lo < x_hi:
        return 0.0
    scale = abs(shift1) + abs(shift2) + abs(x_lo) + abs(x_hi)

    def compute(backend: Backend, idx):
        lift = backend.lift
        val, mag, sens = _segment_terms(
            backend, n, m, lift(np.array([shift1])), lift(np.array([shift2])),
            lift(np.array([x_lo])), lift(np.array([x_hi])),
        )
        v = backend.to_float(val)
        err = backend.unit * (rounding_factor(n + m + 4, n) * mag + scale * sens)
        return v, err

    vals, _, _ = evaluate(compute, 1, policy)
    return float(vals[0])


def _closed_form_parts(backend: Backend, inst: InversionInstance):
    """Double sum and tail term of the closed form for one instance.

    Returns ``(double_sum, tail, error_bound, pair_terms)``; values are
    backend numbers, the bound is a float.
    """
    n, m = inst.n, inst.m
    r1, r2 = inst.route1, inst.route2
    tab1, tab2 = table_for(r1), table_for(r2)
    lo1, up1, lo2, up2 = r1.lowers, r1.uppers, r2.lowers, r2.uppers
    p = subset_shifts(backend, lo1, up1, tab1.membership(n))
    q = subset_shifts(backend, lo2, up2, tab2.membership(m))
    b2 = backend.total(backend.lift(up2))
    b1f, b2f = r1.sum_upper, r2.sum_upper
    hi = backend.total(backend.lift(up1)) if b1f <= b2f else b2

    # float prefilter on max(p_j, q_k) < min(B_n, B_m); the backend
    # re-checks activity exactly below
    hif = float(backend.to_float(hi))
    pf, qf = backend.to_float(p), backend.to_float(q)
    slack = 1e-9 * (abs(hif) + 1.0)
    cand_j, cand_k = np.nonzero(np.maximum(pf[:, None], qf[None, :]) < hif + slack)
    sign = tab1.signs[cand_j] * tab2.signs[cand_k]

    acc = backend.lift(0.0)
    mag_total = 0.0
    sens_total = 0.0
    for start in range(0, cand_j.size, _PAIR_BLOCK):
        block = slice(start, start + _PAIR_BLOCK)
        pj = p[cand_j[block]]
        qk = q[cand_k[block]]
        lo = backend.where(backend.positive(pj - qk), pj, qk)
        active = backend.positive(hi - lo)
        val, mag, sens = _segment_terms(backend, n, m, pj, qk, lo, hi)
        acc = acc + backend.total(backend.where(active, val * sign[block], 0.0))
        mag_total += float(np.sum(mag[active]))
        sens_total += float(np.sum(sens[active]))

    w1 = backend.lift(up1) - backend.lift(lo1)
    w2 = backend.lift(up2) - backend.lift(lo2)
    norm = backend.lift(float(math.factorial(n - 1) * math.factorial(m)))
    for k in range(n):
        norm = norm * w1[k]
    for k in range(m):
        norm = norm * w2[k]
    double_sum = acc / norm
    norm_f = abs(float(backend.to_float(norm)))
    scale = float(np.abs(lo1).sum() + np.abs(up1).sum() + np.abs(lo2).sum() + np.abs(up2).sum())
    err = backend.unit * (
        rounding_factor(n + m + 6, max(cand_j.size, 1)) * mag_total + scale * sens_total
    ) / norm_f

    tail = backend.lift(0.0)
    if b1f > b2f:
        if b2f <= r1.sum_lower:
            tail = backend.lift(1.0)
        else:
            h, herr = cdf_backend(backend, r1, backend.atleast_1d(b2), np.array([b2f]))
            tail = 1.0 - h[0]
            err += float(herr[0])
    return double_sum, tail, err, int(cand_j.size)


def _closed_form_values(backend: Backend, instances: list[InversionInstance], idx: np.ndarray):
    values = np.empty(idx.size)
    errors = np.empty(idx.size)
    for pos, i in enumerate(idx):
        inst = instances[i]
        double_sum, tail, err, _ = _closed_form_parts(backend, inst)
        v = float(backend.to_float(double_sum + tail))
        values[pos] = v
        errors[pos] = err + backend.unit * 8.0 * (inst.n + inst.m + 2) * abs(v)
    return values, errors


def _finish(value: float, err: float, method: Method, detail: dict) -> InversionResult:
    if value < -CLAMP_TOL or value > 1.0 + CLAMP_TOL:
        raise PrecisionError(f"{method.value} probability {value!r} outside [0, 1] beyond tolerance")
    clamped = min(max(value, 0.0), 1.0)
    if clamped != value:
        detail = {**detail, "clamped_from": value}
    return InversionResult(clamped, method, err, detail)


def closed_form_batch(
    instances: Sequence[InversionInstance],
    policy: PrecisionPolicy = DEFAULT_POLICY,
    max_hops: int = DEFAULT_MAX_HOPS,
    max_combined_hops: int = DEFAULT_MAX_COMBINED_HOPS,
) -> list[InversionResult]:
    """Closed-form inversion probability for many instances."""
    instances = list(instances)
    for inst in instances:
        _check_capacity(inst.n, inst.m, max_hops, max_combined_hops)

    def compute(backend: Backend, idx: np.ndarray):
        return _closed_form_values(backend, instances, idx)

    vals, errs, used = evaluate(compute, len(instances), policy)
    return [
        _finish(float(v), float(e), Method.CLOSED_FORM,
                {"arithmetic": u, "terms": 2 ** (inst.n + inst.m)})
        for v, e, u, inst in zip(vals, errs, used, instances)
    ]


def inversion_probability_closed_form(
    instance: InversionInstance,
    policy: PrecisionPolicy = DEFAULT_POLICY,
    max_hops: int = DEFAULT_MAX_HOPS,
    max_combined_hops: int = DEFAULT_MAX_COMBINED_HOPS,
) -> InversionResult:
    """Exact ``P(R1 > R2)`` (strict; ties have probability zero)."""
    return closed_form_batch([instance], policy, max_hops, max_combined_hops)[0]


def closed_form_parts(instance: InversionInstance, policy: PrecisionPolicy = DEFAULT_POLICY):
    """``(double_sum, tail)`` split of the closed form, as floats."""
    _check_capacity(instance.n, instance.m, DEFAULT_MAX_HOPS, DEFAULT_MAX_COMBINED_HOPS)
    parts = {}

    def compute(backend: Backend, idx):
        double_sum, tail, err, _ = _closed_form_parts(backend, instance)
        parts["double_sum"] = float(backend.to_float(double_sum))
        parts["tail"] = float(backend.to_float(tail))
        return np.array([parts["double_sum"] + parts["tail"]]), np.array([err])

    evaluate(compute, 1, policy)
    return parts["double_sum"], parts["tail"]


_GAUSS = {k: np.polynomial.legendre.leggauss(k) for k in (8, 16)}


def _gauss_panels(f, a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    nodes, weights = _GAUSS[order]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    fx = f(x.ravel()).reshape(x.shape)
    return half * (fx @ weights)


def inversion_probability_quadrature(
    instance: InversionInstance,
    abs_tol: float = 1e-10,
    policy: PrecisionPolicy = DEFAULT_POLICY,
    max_panels: int = 20000,
) -> InversionResult:
    """``integral pdf_1(x) cdf_2(x) dx`` over route 1's support.

    The kinks of both routes are forced panel boundaries, so the
    integrand is a polynomial on every panel. Each panel compares an
    8-point and a 16-point Gauss-Legendre rule and is bisected while the
    two disagree by more than its share of ``abs_tol``.
    """
    if not abs_tol > 0:
        raise ValidationError("abs_tol must be positive")
    r1, r2 = instance.route1, instance.route2
    a1, b1 = r1.sum_lower, r1.sum_upper
    cuts = np.concatenate([breakpoints(r1), breakpoints(r2), [a1, b1]])
    cuts = np.unique(np.clip(cuts, a1, b1))
    lo, hi = cuts[:-1], cuts[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]

    def integrand(x):
        return pdf(x, r1, policy) * cdf(x, r2, policy)

    total = 0.0
    err_total = 0.0
    width = b1 - a1
    evaluations = 0
    while lo.size:
        if lo.size + evaluations > max_panels:
            raise ConvergenceError(f"quadrature did not converge within {max_panels} panels")
        coarse = _gauss_panels(integrand, lo, hi, 8)
        fine = _gauss_panels(integrand, lo, hi, 16)
        evaluations += lo.size
        err = np.abs(fine - coarse)
        ok = err <= abs_tol * (hi - lo) / width
        total += float(np.sum(fine[ok]))
        err_total += float(np.sum(err[ok]))
        mid = 0.5 * (lo + hi)
        lo, hi = (np.concatenate([lo[~ok], mid[~ok]]), np.concatenate([mid[~ok], hi[~ok]]))
    return _finish(total, err_total, Method.QUADRATURE, {"panels": evaluations})


MC_CHUNK = 1 << 16


def inversion_probability_montecarlo(
    instance: InversionInstance, samples: int, seed: int
) -> InversionResult:
    """Fraction of sampled trials in which route 1's delay strictly exceeds route 2's.

    Trials are drawn in fixed chunks of ``MC_CHUNK``; chunk ``c`` uses a
    Philox counter stream keyed by ``seed`` with ``c`` in the top counter
    word, so trial ``t`` always sees the same uniforms.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    r1, r2 = instance.route1, instance.route2
    wins = 0
    for chunk, start in enumerate(range(0, samples, MC_CHUNK)):
        count = min(MC_CHUNK, samples - start)
        rng = np.random.Generator(
            np.random.Philox(key=int(seed) % (1 << 128), counter=[0, 0, 0, chunk])
        )
        u = rng.random((count, r1.n + r2.n))
        d1 = (r1.lowers + u[:, : r1.n] * r1.lengths).sum(axis=1)
        d2 = (r2.lowers + u[:, r1.n :] * r2.lengths).sum(axis=1)
        wins += int(np.count_nonzero(d1 > d2))
    p = wins / samples
    return InversionResult(
        p, Method.MONTE_CARLO, math.sqrt(p * (1.0 - p) / samples), {"samples": samples, "wins": wins}
    )
