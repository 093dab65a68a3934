"""Average inversion probability versus route-metric difference.

For each grid value ``d`` we draw ``metric_samples`` pairs of equal-length
routes whose average link metrics differ by exactly ``d`` (route 1 the
better one), map them through each jitter mechanism and average the
closed-form inversion probability.

Metric-pair law: route 2's links are i.i.d. uniform on ``(0, 1]``; route
1's links are drawn the same way and then affinely pulled toward their
own mean and shifted so that their average is route 2's plus ``d``. The
pull is the mildest one that keeps every link inside ``(0, 1]``. Pairs
whose route-2 average exceeds ``1 - d`` are rejected.

All mechanisms at a grid point see the same metric pairs, drawn from a
generator keyed by ``(seed, grid index)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import JitterInvError, ValidationError
from .inversion import InversionInstance, closed_form_batch
from .jitter import JitterMechanism, Kind, route_delay_model
from .precision import DEFAULT_POLICY, PrecisionPolicy

log = logging.getLogger(__name__)

DEFAULT_SEED = 5148
DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(11))

_PULL_MARGIN = 1.0 - 1e-9


def default_mechanisms(j_max: float, c: float) -> tuple[JitterMechanism, ...]:
    return (
        JitterMechanism(Kind.RFC5148, j_max),
        JitterMechanism(Kind.ADAPTIVE, j_max),
        JitterMechanism(Kind.BOUNDED_ADAPTIVE, j_max, c=c),
    )


@dataclass(frozen=True)
class SweepConfig:
    hop_count: int = 6
    j_max: float = 100.0
    c: float = 30.0
    metric_samples: int = 1000
    difference_grid: tuple[float, ...] = DEFAULT_GRID
    seed: int = DEFAULT_SEED
    mechanisms: tuple[JitterMechanism, ...] = field(default=())

    def __post_init__(self):
        if self.hop_count < 1:
            raise ValidationError("hop_count must be >= 1")
        if self.metric_samples < 1:
            raise ValidationError("metric_samples must be >= 1")
        grid = tuple(float(d) for d in self.difference_grid)
        if not grid:
            raise ValidationError("difference grid is empty")
        if any(not 0.0 <= d < 1.0 for d in grid):
            raise ValidationError("grid values must lie in [0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("grid values must be strictly increasing")
        object.__setattr__(self, "difference_grid", grid)
        if not self.mechanisms:
            object.__setattr__(self, "mechanisms", default_mechanisms(self.j_max, self.c))
        for mech in self.mechanisms:
            if not mech.is_analytic:
                raise ValidationError(f"{mech.name} jitter has fixed delays; the sweep needs uniform ones")


@dataclass(frozen=True)
class SweepRow:
    mechanism: str
    metric_difference: float
    mean_inversion_probability: float
    sample_count: int
    std_error: float  # nan when fewer than two samples
    failures: int = 0

    def as_record(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "metric_difference": self.metric_difference,
            "mean_inversion_probability": self.mean_inversion_probability,
            "std_error": None if math.isnan(self.std_error) else self.std_error,
            "samples": self.sample_count,
        }


def _uniform_metrics(rng: np.random.Generator, size: int) -> np.ndarray:
    # random() is on [0, 1); flip it onto (0, 1]
    return 1.0 - rng.random(size)


def sample_metric_pair(
    hop_count: int, target_difference: float, rng: np.random.Generator, max_tries: int = 10_000
) -> tuple[list[float], list[float]]:
    """Two metric lists whose averages differ by ``target_difference``.

    Returns ``(route1, route2)`` with route 1 the better route.
    """
    if hop_count < 1:
        raise ValidationError("hop_count must be >= 1")
    d = float(target_difference)
    if not 0.0 <= d < 1.0:
        raise ValidationError(f"metric difference {d} is infeasible; need 0 <= d < 1")
    for _ in range(max_tries):
        route2 = _uniform_metrics(rng, hop_count)
        target = float(np.mean(route2)) + d
        route1 = _uniform_metrics(rng, hop_count)
        if target > 1.0:
            continue
        dev = route1 - np.mean(route1)
        pull = 1.0
        up = dev > 0
        down = dev < 0
        if np.any(up):
            pull = min(pull, float(np.min((1.0 - target) / dev[up])))
        if np.any(down):
            pull = min(pull, _PULL_MARGIN * float(np.min(target / -dev[down])))
        route1 = np.minimum(target + pull * dev, 1.0)
        if np.all(route1 > 0.0):
            return route1.tolist(), route2.tolist()
    raise ValidationError(f"could not sample a metric pair with difference {d} in {max_tries} tries")


def run_sweep(
    config: SweepConfig,
    policy: PrecisionPolicy = DEFAULT_POLICY,
    progress: Callable[[str], None] | None = None,
) -> list[SweepRow]:
    """Mean closed-form inversion probability per mechanism and grid point."""
    per_mech: dict[int, list[SweepRow]] = {i: [] for i in range(len(config.mechanisms))}
    cache: dict[tuple, float] = {}
    for gi, diff in enumerate(config.difference_grid):
        rng = np.random.default_rng([config.seed, gi])
        pairs = [sample_metric_pair(config.hop_count, diff, rng) for _ in range(config.metric_samples)]
        for mi, mech in enumerate(config.mechanisms):
            row = _grid_point(mech, diff, pairs, policy, cache)
            per_mech[mi].append(row)
            if progress:
                progress(f"{mech.name} d={diff:g}: {row.mean_inversion_probability:.6f}")
    return [row for mi in sorted(per_mech) for row in per_mech[mi]]


def _grid_point(mech, diff, pairs, policy, cache) -> SweepRow:
    probs: list[float | None] = []
    todo: list[tuple[int, tuple, InversionInstance]] = []
    for r1, r2 in pairs:
        inst = InversionInstance(route_delay_model(mech, r1), route_delay_model(mech, r2))
        key = (tuple(inst.route1.intervals()), tuple(inst.route2.intervals()))
        if key in cache:
            probs.append(cache[key])
        else:
            todo.append((len(probs), key, inst))
            probs.append(None)
    failures = 0
    for pos, key, inst in todo:
        if key in cache:
            probs[pos] = cache[key]
            continue
        try:
            p = closed_form_batch([inst], policy)[0].probability
        except JitterInvError as exc:
            failures += 1
            log.warning("sweep instance failed (%s, d=%g): %s", mech.name, diff, exc)
            continue
        cache[key] = p
        probs[pos] = p
    values = np.array([p for p in probs if p is not None])
    if failures:
        log.warning("%s d=%g: %d of %d instances excluded", mech.name, diff, failures, len(pairs))
    k = values.size
    mean = float(np.mean(values)) if k else math.nan
    se = float(np.std(values, ddof=1) / math.sqrt(k)) if k >= 2 else math.nan
    return SweepRow(mech.name, diff, mean, k, se, failures)


SWEEP_COLUMNS = ("mechanism", "metric_difference", "mean_inversion_probability", "std_error", "samples")


def sweep_records(rows: Sequence[SweepRow]) -> list[dict]:
    return [row.as_record() for row in rows]
