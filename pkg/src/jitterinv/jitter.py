"""Jitter mechanisms: link metric -> per-hop forwarding delay interval.

All delays are in milliseconds; link metrics lie in ``(0, 1]`` with 1 the
best link.

=================  ==========================================
mechanism          interval
=================  ==========================================
rfc5148            ``(0, j_max)``
deterministic      exactly ``j_max`` (no randomness)
window             ``(alpha * j_max, j_max)``
adaptive           ``((1 - m) j_max, j_max)``
bounded-adaptive   ``((1 - m) j_max, (1 - m) j_max + c)``
=================  ==========================================

The bounded-adaptive upper end is not clamped to ``j_max``: for
``m < c / j_max`` it exceeds it, which keeps the window width at ``c``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateIntervalError, ValidationError
from .uniform_sum import RouteDelayModel, UniformSpec


class Kind(str, enum.Enum):
    RFC5148 = "rfc5148"
    DETERMINISTIC = "deterministic"
    WINDOW = "window"
    ADAPTIVE = "adaptive"
    BOUNDED_ADAPTIVE = "bounded-adaptive"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        key = name.strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValidationError(f"unknown jitter mechanism {name!r} (choose from {choices})") from None


@dataclass(frozen=True)
class JitterMechanism:
    kind: Kind
    j_max: float
    alpha: float = 0.0
    c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind) if isinstance(self.kind, str) else self.kind)
        if not (math.isfinite(self.j_max) and self.j_max > 0):
            raise ValidationError(f"j_max must be positive, got {self.j_max}")
        if self.kind is Kind.WINDOW and not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"window alpha must be in [0, 1], got {self.alpha}")
        if self.kind is Kind.BOUNDED_ADAPTIVE:
            if self.c is None or not 0.0 < self.c <= self.j_max:
                raise ValidationError(f"bounded-adaptive needs 0 < c <= j_max, got c={self.c}")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def is_analytic(self) -> bool:
        """False for mechanisms with zero-width (fixed) delays."""
        if self.kind is Kind.DETERMINISTIC:
            return False
        return not (self.kind is Kind.WINDOW and self.alpha == 1.0)

    def bounds(self, metric: float) -> tuple[float, float]:
        """Raw ``(lower, upper)`` delay bounds, degenerate ones included."""
        m = check_metric(metric)
        j = self.j_max
        if self.kind is Kind.RFC5148:
            return 0.0, j
        if self.kind is Kind.DETERMINISTIC:
            return j, j
        if self.kind is Kind.WINDOW:
            return self.alpha * j, j
        lower = (1.0 - m) * j
        if self.kind is Kind.ADAPTIVE:
            return lower, j
        return lower, lower + self.c


def check_metric(value: float) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ValidationError(f"link metric must lie in (0, 1], got {value}")
    return value


def jitter_interval(mech: JitterMechanism, metric: float) -> UniformSpec:
    """Uniform delay interval a link of quality ``metric`` gets under ``mech``."""
    lower, upper = mech.bounds(metric)
    if upper == lower:
        raise DegenerateIntervalError(
            f"{mech.name} jitter is a fixed {upper} ms delay and has no uniform interval; "
            "the analytic engine cannot use it"
        )
    return UniformSpec(lower, upper)


def route_delay_model(mech: JitterMechanism, metrics: Sequence[float]) -> RouteDelayModel:
    """One interval per link, in route order."""
    metrics = check_route(metrics)
    return RouteDelayModel(tuple(jitter_interval(mech, m) for m in metrics))


def check_route(metrics: Sequence[float]) -> list[float]:
    metrics = [check_metric(m) for m in metrics]
    if not metrics:
        raise ValidationError("a route needs at least one link metric")
    return metrics


def route_metric(metrics: Sequence[float]) -> float:
    """Average link metric of a route."""
    metrics = check_route(metrics)
    return math.fsum(metrics) / len(metrics)


def sample_jitter(mech: JitterMechanism, metric: float, rng: np.random.Generator) -> float:
    """One forwarding delay draw; the deterministic mechanism returns ``j_max``."""
    lower, upper = mech.bounds(metric)
    if upper == lower:
        return upper
    return float(rng.uniform(lower, upper))


def make_mechanism(name: str, j_max: float, alpha: float = 0.0, c: float | None = None) -> JitterMechanism:
    return JitterMechanism(Kind.parse(name), float(j_max), float(alpha), None if c is None else float(c))
