from .ops import gossip_mix, ole_init
from .runner import (
    ExperimentResult,
    ExperimentRunner,
    RoundOutcome,
    build_setup,
    run_experiment,
)
from .state import ClientState, ExperimentSetup

__all__ = [
    "ole_init",
    "gossip_mix",
    "ClientState",
    "ExperimentSetup",
    "ExperimentRunner",
    "ExperimentResult",
    "RoundOutcome",
    "build_setup",
    "run_experiment",
]
