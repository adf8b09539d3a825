"""Virtual bench used as ground-truth oracle for the analysis modules."""
from .acquisition import (
    GridSpec,
    SessionBundle,
    run_attenuator_cal,
    run_nonlin_acquisition,
    run_polscan,
    run_sde_session,
    run_stability,
    run_switch_cal,
    simulate_session,
)
from .scenario import SimScenario, stability_scenario

__all__ = [
    "GridSpec", "SessionBundle", "SimScenario", "run_attenuator_cal", "run_nonlin_acquisition",
    "run_polscan", "run_sde_session", "run_stability", "run_switch_cal", "simulate_session",
    "stability_scenario",
]
