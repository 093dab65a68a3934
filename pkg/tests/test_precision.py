import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jitterinv.errors import PrecisionError
from jitterinv.precision import DD, DOUBLE_DOUBLE, FLOAT64, MPBackend, PrecisionPolicy, evaluate

ctx = mpmath.MPContext()
ctx.dps = 50


def as_mp(d: DD):
    return [ctx.mpf(float(h)) + ctx.mpf(float(l)) for h, l in zip(np.ravel(d.hi), np.ravel(d.lo))]


finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: abs(v) > 1e-6)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite)
def test_double_double_arithmetic(a, b, c):
    x = DD(np.array([a]))
    y = DD(np.array([b]))
    z = DD(np.array([c]))
    got = as_mp((x * y - z) / y + x ** 3)[0]
    A, B, C = ctx.mpf(a), ctx.mpf(b), ctx.mpf(c)
    want = (A * B - C) / B + A**3
    assert abs(got - want) <= 1e-29 * (abs(A * B) / abs(B) + abs(C / B) + abs(A) ** 3)


def test_double_double_pairwise_sum():
    rng = np.random.default_rng(0)
    v = rng.normal(size=10_001) * 10.0 ** rng.integers(-8, 8, size=10_001)
    got = DD(v).sum(axis=0)
    want = ctx.fsum(ctx.mpf(float(t)) for t in v)
    assert abs(as_mp(got)[0] - want) <= 1e-28 * float(np.sum(np.abs(v)))


def test_policy_chain():
    assert [b.name for b in PrecisionPolicy().chain()] == ["double-double", "mpmath-60"]
    assert [b.name for b in PrecisionPolicy(1e-9, "float64", None).chain()] == ["float64"]
    with pytest.raises(ValueError):
        PrecisionPolicy(arithmetic="quad")
    with pytest.raises(ValueError):
        PrecisionPolicy(rel_tol=0.0)


def test_evaluate_escalates_only_failing_elements():
    calls = []

    def compute(backend, idx):
        calls.append((backend.name, idx.tolist()))
        vals = np.ones(idx.size)
        # element 1 is "hard" until mpmath
        errs = np.where((idx == 1) & (backend.name != "mpmath-60"), 1.0, 0.0)
        return vals, errs

    values, errors, used = evaluate(compute, 3, PrecisionPolicy())
    assert calls == [("double-double", [0, 1, 2]), ("mpmath-60", [1])]
    assert used == ["double-double", "mpmath-60", "double-double"]
    np.testing.assert_array_equal(values, 1.0)


def test_evaluate_raises_when_chain_exhausted():
    def compute(backend, idx):
        return np.ones(idx.size), np.ones(idx.size)

    with pytest.raises(PrecisionError):
        evaluate(compute, 2, PrecisionPolicy(arithmetic="float64", fallback_dps=None))
    # the adaptive mpmath passes stop at max_dps
    with pytest.raises(PrecisionError):
        evaluate(compute, 1, PrecisionPolicy(max_dps=100))


def test_evaluate_adds_digits_for_tiny_values():
    # a value whose attainable error shrinks with the working precision
    def compute(backend, idx):
        unit = backend.unit
        return np.full(idx.size, 1e-150), np.full(idx.size, 1e10 * unit)

    values, errors, used = evaluate(compute, 1, PrecisionPolicy())
    assert used[0].startswith("mpmath-") and int(used[0].split("-")[1]) > 60
    assert errors[0] <= 1e-9 * 1e-150


def test_backends_agree():
    x = np.array([0.1, 2.5, 1e-3])
    for backend in (FLOAT64, DOUBLE_DOUBLE, MPBackend(40)):
        v = backend.lift(x)
        out = backend.to_float(backend.total(v * v, axis=0))
        assert out == pytest.approx(float(np.sum(x * x)), rel=1e-15)
