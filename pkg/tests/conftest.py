import os
import tempfile
from typing import Any, Callable, Dict

# Keep test log files out of the working tree; must run before dgossip is imported
os.environ.setdefault("LOG_DIR", tempfile.mkdtemp(prefix="dgossip-logs-"))

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dgossip.data import Shard, generate_synthetic
from dgossip.model import ModelKind, ModelSpec
from dgossip.schemas import ExperimentConfig, parse_experiment
from dgossip.utils import set_dotted

settings.register_profile(
    "fast", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("DGOSSIP_SEED", raising=False)


@pytest.fixture
def identity_quadratic() -> Callable[..., ModelSpec]:
    """f_i(x) = ½‖x‖² for every client (A = I, b = 0)."""

    def make(p: int, m: int = 1) -> ModelSpec:
        return ModelSpec(
            ModelKind.QUADRATIC,
            quad_a=np.stack([np.eye(p)] * m),
            quad_b=np.zeros((m, p)),
            x_star=np.zeros(p),
        )

    return make


@pytest.fixture
def placeholder_shard() -> Callable[[int], Shard]:
    def make(client: int = 0) -> Shard:
        return Shard(client, np.zeros((1, 0)), np.zeros(1, dtype=np.int64))

    return make


@pytest.fixture
def small_dataset():
    return generate_synthetic(C=3, d=4, per_class=20, cluster_spread=0.5, seed=1)


QUADRATIC_BASE: Dict[str, Any] = {
    "algorithm": "oled_sgd",
    "beta": 0.2,
    "clients": 8,
    "rounds": 20,
    "local_steps": 3,
    "seed": 3,
    "topology": {"kind": "ring"},
    "model": {"kind": "quadratic", "dim": 4, "heterogeneity": 1.0},
    "optimizer": {"eta0": 0.05, "decay": 1.0},
}

LOGISTIC_BASE: Dict[str, Any] = {
    "algorithm": "oled_sgd",
    "beta": 0.2,
    "clients": 6,
    "rounds": 15,
    "local_steps": 3,
    "seed": 5,
    "targets": [0.0, 0.99],
    "topology": {"kind": "ring"},
    "model": {"kind": "logistic"},
    "optimizer": {"eta0": 0.1, "batch_size": 8},
    "partition": {"scheme": "dirichlet", "alpha": 0.5},
    "dataset": {"classes": 3, "dim": 4, "per_class": 30, "test_per_class": 20},
}


def _build(base: Dict[str, Any], overrides: Dict[str, Any]) -> ExperimentConfig:
    tree = base
    for key, value in overrides.items():
        tree = set_dotted(tree, key, value)
    return parse_experiment(tree)


@pytest.fixture
def quadratic_config() -> Callable[..., ExperimentConfig]:
    """Small ring of heterogeneous quadratics; keyword overrides use dotted keys."""
    return lambda **overrides: _build(QUADRATIC_BASE, {k.replace("__", "."): v for k, v in overrides.items()})


@pytest.fixture
def logistic_config() -> Callable[..., ExperimentConfig]:
    """Small Dirichlet-partitioned logistic problem; keyword overrides use dotted keys."""
    return lambda **overrides: _build(LOGISTIC_BASE, {k.replace("__", "."): v for k, v in overrides.items()})
