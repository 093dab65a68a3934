"""Command-line entry point: ``jitterinv {pdelay,sweep,simulate,mc-check}``.

Syntax shared by the subcommands:

* an interval list is comma-separated ``a:b`` pairs in ms, e.g. ``0:30,50:80``;
* a metric list is comma-separated link metrics, e.g. ``1,0.8,0.6``;
* a mechanism is one of rfc5148, deterministic, window, adaptive,
  bounded-adaptive.

Exit codes: 0 success, 1 analytic failure or failed check, 2 usage error or
malformed input, 3 fixed-delay mechanism handed to the analytic engine,
4 capacity limit exceeded.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import CapacityError, DegenerateIntervalError, JitterInvError, ValidationError
from .floodsim import (
    DISCOVERY_COLUMNS,
    EVENT_COLUMNS,
    SUMMARY_COLUMNS,
    SimConfig,
    density_sweep,
    discovery_records,
    event_records,
)
from .inversion import (
    InversionInstance,
    inversion_probability_closed_form,
    inversion_probability_montecarlo,
    inversion_probability_quadrature,
)
from .jitter import make_mechanism, route_delay_model
from .report import StreamingCSV, render, save
from .sweep import DEFAULT_GRID, DEFAULT_SEED, SWEEP_COLUMNS, SweepConfig, run_sweep, sweep_records
from .uniform_sum import RouteDelayModel

log = logging.getLogger("jitterinv")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_CAPACITY = 4

RESULT_COLUMNS = ("method", "probability", "error_estimate")


def parse_intervals(text: str) -> list[tuple[float, float]]:
    intervals = []
    for part in text.split(","):
        part = part.strip()
        try:
            a, b = part.split(":")
            intervals.append((float(a), float(b)))
        except ValueError:
            raise ValidationError(f"malformed interval {part!r}; expected a:b") from None
    return intervals


def parse_floats(text: str, what: str = "value") -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"malformed {what} list {text!r}") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"malformed integer list {text!r}") from None


def parse_pair(text: str, sep: str) -> tuple[float, float]:
    try:
        a, b = text.lower().split(sep)
        return float(a), float(b)
    except ValueError:
        raise ValidationError(f"malformed pair {text!r}; expected a{sep}b") from None


def _add_route_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("routes (intervals, or mechanism + metrics)")
    g.add_argument("--r1", help="route 1 (better route) intervals, e.g. 0:30,50:80")
    g.add_argument("--r2", help="route 2 intervals")
    g.add_argument("--mech", help="jitter mechanism mapping metrics to intervals")
    g.add_argument("--j-max", type=float, default=100.0, help="J_max in ms (default 100)")
    g.add_argument("--c", type=float, default=30.0, help="bounded-adaptive width C in ms (default 30)")
    g.add_argument("--alpha", type=float, default=0.0, help="window jitter alpha (default 0)")
    g.add_argument("--r1-metrics", help="route 1 link metrics, e.g. 1,0.9")
    g.add_argument("--r2-metrics", help="route 2 link metrics")


def _route(args, which: str) -> RouteDelayModel:
    intervals = getattr(args, which)
    metrics = getattr(args, f"{which}_metrics")
    if intervals and metrics:
        raise ValidationError(f"give either --{which} or --{which}-metrics, not both")
    if intervals:
        return RouteDelayModel.from_intervals(parse_intervals(intervals))
    if metrics:
        if not args.mech:
            raise ValidationError(f"--{which}-metrics needs --mech")
        mech = make_mechanism(args.mech, args.j_max, args.alpha, args.c)
        return route_delay_model(mech, parse_floats(metrics, "metric"))
    raise ValidationError(f"route {which[-1]} missing: pass --{which} or --{which}-metrics")


def _instance(args) -> InversionInstance:
    if getattr(args, "random_hops", None):
        return _random_instance(args.random_hops, args.seed)
    return InversionInstance(_route(args, "r1"), _route(args, "r2"))


def _random_instance(spec: str, seed: int) -> InversionInstance:
    n, m = (int(v) for v in parse_pair(spec, ":"))
    rng = np.random.default_rng([seed, n, m])

    def route(k):
        ends = np.sort(rng.uniform(0.0, 250.0, size=(k, 2)), axis=1)
        return RouteDelayModel.from_intervals(ends.tolist())

    return InversionInstance(route(n), route(m))


def _emit(text: str, output: str | None) -> None:
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_pdelay(args) -> int:
    inst = _instance(args)
    methods = {
        "closed-form": lambda: inversion_probability_closed_form(inst),
        "quadrature": lambda: inversion_probability_quadrature(inst, abs_tol=args.abs_tol),
        "monte-carlo": lambda: inversion_probability_montecarlo(inst, args.samples, args.seed),
    }
    chosen = list(methods) if args.method == "all" else [args.method]
    results = [methods[name]() for name in chosen]
    rows = [
        {"method": r.method.value, "probability": r.probability, "error_estimate": r.error_estimate}
        for r in results
    ]
    if args.format == "text":
        text = "".join(
            f"{r['method']}: P(R1 > R2) = {r['probability']!r} (error estimate {r['error_estimate']:.3g})\n"
            for r in rows
        )
    else:
        text = render(rows, RESULT_COLUMNS, args.format)
    _emit(text, args.output)
    return EXIT_OK


def cmd_mc_check(args) -> int:
    inst = _instance(args)
    closed = inversion_probability_closed_form(inst)
    quad = inversion_probability_quadrature(inst, abs_tol=min(args.quad_tol, 1e-8))
    mc = inversion_probability_montecarlo(inst, args.samples, args.seed)
    d_quad = abs(closed.probability - quad.probability)
    d_mc = abs(closed.probability - mc.probability)
    # a zero-variance estimate still gets one trial's worth of slack
    mc_allow = args.tolerance_multiplier * max(mc.error_estimate, 1.0 / args.samples)
    ok_quad = d_quad <= args.quad_tol
    ok_mc = d_mc <= mc_allow
    print(f"closed_form  {closed.probability!r}")
    print(f"quadrature   {quad.probability!r}  |delta| = {d_quad:.3g} (allowed {args.quad_tol:g})")
    print(f"monte_carlo  {mc.probability!r}  |delta| = {d_mc:.3g} (allowed {mc_allow:.3g}, "
          f"{args.samples} samples)")
    passed = ok_quad and ok_mc
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_FAILURE


def _grid(args) -> tuple[float, ...]:
    if args.grid:
        return tuple(parse_floats(args.grid, "grid"))
    return DEFAULT_GRID


def cmd_sweep(args) -> int:
    mechs = tuple(
        make_mechanism(name, args.j_max, args.alpha, args.c)
        for name in args.mechanisms.split(",") if name.strip()
    )
    config = SweepConfig(
        hop_count=args.hops, j_max=args.j_max, c=args.c, metric_samples=args.samples,
        difference_grid=_grid(args), seed=args.seed, mechanisms=mechs,
    )
    progress = log.info if args.verbose else None
    rows = run_sweep(config, progress=progress)
    records = sweep_records(rows)
    path = save(records, SWEEP_COLUMNS, args.output, args.format)
    failures = sum(r.failures for r in rows)
    print(f"wrote {len(rows)} rows to {path}")
    print(f"{'mechanism':<18}{'difference':>11}{'mean P':>12}{'std err':>12}")
    for r in rows:
        se = "" if r.std_error != r.std_error else f"{r.std_error:.2e}"
        print(f"{r.mechanism:<18}{r.metric_difference:>11.3f}{r.mean_inversion_probability:>12.6f}{se:>12}")
    if failures:
        print(f"warning: {failures} instance(s) failed and were excluded", file=sys.stderr)
    return EXIT_OK


_SIM_KEYS = {
    # config-file key -> (SimConfig field, parser)
    "node_count": ("node_count", int),
    "area": ("area", lambda v: parse_pair(v, "x")),
    "range": ("range", float),
    "j_max": ("j_max", float),
    "c": ("c", float),
    "alpha": ("alpha", float),
    "metric_range": ("metric_range", lambda v: parse_pair(v, ":")),
    "duration": ("duration", float),
    "discovery_batch": ("discovery_batch", int),
    "batch_period": ("batch_period", float),
    "packet_airtime": ("packet_airtime", float),
    "initiation_spread": ("initiation_spread", float),
    "collisions": ("collisions", lambda v: v.strip().lower() in ("1", "true", "yes", "on")),
    "seed": ("seed", int),
}


def load_sim_config(path: str | Path) -> tuple[dict, dict]:
    """Read ``[simulation]`` (SimConfig fields) and ``[sweep]`` (node_counts,
    repetitions, mechanisms) from an INI-style file."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValidationError(f"cannot read config file {path}")
    fields = {}
    if parser.has_section("simulation"):
        for key, raw in parser.items("simulation"):
            if key not in _SIM_KEYS:
                raise ValidationError(f"unknown simulation key {key!r} in {path}")
            name, conv = _SIM_KEYS[key]
            try:
                fields[name] = conv(raw)
            except ValueError:
                raise ValidationError(f"bad value for {key}: {raw!r}") from None
    extra = dict(parser.items("sweep")) if parser.has_section("sweep") else {}
    return fields, extra


def cmd_simulate(args) -> int:
    fields, extra = load_sim_config(args.config) if args.config else ({}, {})
    flag_map = {
        "area": ("area", lambda v: parse_pair(v, "x")),
        "range": ("range", float),
        "j_max": ("j_max", float),
        "c": ("c", float),
        "alpha": ("alpha", float),
        "metrics": ("metric_range", lambda v: parse_pair(v, ":")),
        "duration": ("duration", float),
        "batch": ("discovery_batch", int),
        "period": ("batch_period", float),
        "airtime": ("packet_airtime", float),
        "spread": ("initiation_spread", float),
        "seed": ("seed", int),
    }
    for flag, (name, conv) in flag_map.items():
        value = getattr(args, flag)
        if value is not None:
            fields[name] = conv(value) if isinstance(value, str) else value
    if args.no_collisions:
        fields["collisions"] = False
    node_counts = parse_ints(args.nodes or extra.get("node_counts", str(fields.get("node_count", 100))))
    repetitions = args.reps if args.reps is not None else int(extra.get("repetitions", 1))
    mechanisms = [m.strip() for m in
                  (args.mechanisms or extra.get("mechanisms", "rfc5148,adaptive,bounded-adaptive")).split(",")
                  if m.strip()]
    fields["node_count"] = node_counts[0]
    base = SimConfig(**fields)
    for mech in mechanisms:
        base.replace(mechanism=mech)  # validate names and parameters up front

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    ext = args.format
    discoveries = []
    event_sink = StreamingCSV(args.event_log, EVENT_COLUMNS) if args.event_log else None

    def on_campaign(entry):
        discoveries.extend(discovery_records(entry))
        if event_sink is not None:
            event_sink.write(event_records(entry))

    progress = log.info if args.verbose else None
    try:
        cells = density_sweep(base, node_counts, repetitions, mechanisms, progress=progress,
                              on_campaign=on_campaign, record_events=event_sink is not None)
    finally:
        if event_sink is not None:
            event_sink.close()
    summary = save([c.as_record() for c in cells], SUMMARY_COLUMNS, out / f"summary.{ext}", ext)
    per = save(discoveries, DISCOVERY_COLUMNS, out / f"discoveries.{ext}", ext)
    campaigns = len(node_counts) * len(mechanisms) * repetitions
    print(f"{campaigns} campaign(s), {len(discoveries)} discoveries; wrote {summary} and {per}")
    print(f"{'nodes':>6} {'mechanism':<18}{'route metric':>13}{'time (ms)':>11}{'collisions':>12}{'found':>7}")
    for c in cells:
        print(f"{c.node_count:>6} {c.mechanism:<18}{c.mean_route_metric:>13.4f}"
              f"{c.mean_discovery_time:>11.1f}{c.mean_collisions:>12.1f}{c.found_fraction:>7.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jitterinv",
        description="Delay-inversion probability of uniform jitter mechanisms, "
                    "and RREQ flooding simulation.",
        epilog="Intervals: a:b pairs joined by commas (ms). Metrics: comma-separated values in (0, 1]. "
               "Exit codes: 0 ok, 1 analytic/check failure, 2 usage, 3 fixed-delay mechanism, 4 capacity.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pdelay", help="inversion probability P(R1 > R2) of two routes")
    _add_route_args(p)
    p.add_argument("--method", choices=["closed-form", "quadrature", "monte-carlo", "all"],
                   default="closed-form")
    p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo trials")
    p.add_argument("--abs-tol", type=float, default=1e-10, help="quadrature tolerance")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--output", help="write here instead of stdout")
    p.set_defaults(func=cmd_pdelay)

    p = sub.add_parser("mc-check", help="compare closed form, quadrature and Monte Carlo")
    _add_route_args(p)
    p.add_argument("--random-hops", metavar="N:M",
                   help="use a random N-hop vs M-hop instance (intervals in [0, 250] ms) drawn from --seed")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--tolerance-multiplier", type=float, default=4.0,
                   help="allowed Monte Carlo deviation in standard errors (default 4)")
    p.add_argument("--quad-tol", type=float, default=1e-6,
                   help="allowed |closed form - quadrature| (default 1e-6)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_mc_check)

    p = sub.add_parser("sweep", help="mean inversion probability vs route-metric difference")
    p.add_argument("--hops", type=int, default=6)
    p.add_argument("--j-max", type=float, default=100.0)
    p.add_argument("--c", type=float, default=30.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=1000, help="metric pairs per grid point")
    p.add_argument("--grid", help="comma-separated metric differences (default 0,0.05,...,0.5)")
    p.add_argument("--mechanisms", default="rfc5148,adaptive,bounded-adaptive")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="RREQ flooding campaigns over node densities")
    p.add_argument("--config", help="INI file with [simulation] and optional [sweep] sections")
    p.add_argument("--nodes", help="comma-separated node counts (default 100)")
    p.add_argument("--reps", type=int, help="repetitions per node count (default 1)")
    p.add_argument("--mechanisms", help="default rfc5148,adaptive,bounded-adaptive")
    p.add_argument("--area", help="WIDTHxHEIGHT in meters (default 1000x1000)")
    p.add_argument("--range", type=float, help="radio range in meters (default 250)")
    p.add_argument("--j-max", type=float, help="J_max in ms (default 250)")
    p.add_argument("--c", type=float, help="bounded-adaptive width in ms (default 40)")
    p.add_argument("--alpha", type=float, help="window jitter alpha (default 0)")
    p.add_argument("--metrics", help="link metric range LO:HI (default 0.5:1)")
    p.add_argument("--duration", type=float, help="campaign length in s (default 100)")
    p.add_argument("--batch", type=int, help="discoveries per batch (default 10)")
    p.add_argument("--period", type=float, help="batch period in s (default 2)")
    p.add_argument("--airtime", type=float, help="packet airtime in ms (default 1)")
    p.add_argument("--spread", type=float, help="initiation spread within a batch in ms (default: whole period)")
    p.add_argument("--no-collisions", action="store_true", help="disable the collision model")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--output", default="sim-out", help="output directory")
    p.add_argument("--event-log", help="also write every event to this CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DegenerateIntervalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except CapacityError as exc:
        print(f"error: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ValidationError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except JitterInvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
