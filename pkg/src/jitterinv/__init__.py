"""Delay inversion under uniform forwarding jitter.

Exact distribution of a sum of independent, non-identical uniform delays,
the probability that a better route's flood arrives after a worse one's,
the jitter mechanisms that produce those delays, a metric-difference sweep
and a discrete-event RREQ flooding simulator.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConvergenceError,
    DegenerateIntervalError,
    JitterInvError,
    PrecisionError,
    ValidationError,
)
from .floodsim import SimConfig, Topology, density_sweep, run_campaign, run_discovery
from .inversion import (
    InversionInstance,
    InversionResult,
    Method,
    closed_form_batch,
    inversion_probability_closed_form,
    inversion_probability_montecarlo,
    inversion_probability_quadrature,
)
from .jitter import JitterMechanism, Kind, jitter_interval, make_mechanism, route_delay_model, route_metric
from .precision import PrecisionPolicy
from .sweep import SweepConfig, run_sweep
from .uniform_sum import RouteDelayModel, UniformSpec, cdf, pdf, subset_sums

__all__ = [
    "CapacityError", "ConvergenceError", "DegenerateIntervalError", "JitterInvError",
    "PrecisionError", "ValidationError", "SimConfig", "Topology", "density_sweep",
    "run_campaign", "run_discovery", "InversionInstance", "InversionResult", "Method",
    "closed_form_batch", "inversion_probability_closed_form", "inversion_probability_montecarlo",
    "inversion_probability_quadrature", "JitterMechanism", "Kind", "jitter_interval",
    "make_mechanism", "route_delay_model", "route_metric", "PrecisionPolicy", "SweepConfig",
    "run_sweep", "RouteDelayModel", "UniformSpec", "cdf", "pdf", "subset_sums",
]
