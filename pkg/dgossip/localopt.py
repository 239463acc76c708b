"""Per-client local training: SGD, SAM and heavy-ball momentum over K steps."""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dgossip.data import Shard
from dgossip.model import ModelSpec, loss_and_grad
from dgossip.utils import ConfigError, get_module_logger

logger = get_module_logger()


class OptimizerMethod(str, Enum):
    SGD = "sgd"
    SAM = "sam"
    SGD_MOMENTUM = "sgd_momentum"


class OptimizerConfig(BaseModel):
    method: Optional[OptimizerMethod] = Field(
        default=None, description="Local update rule; filled in from the algorithm when omitted"
    )
    eta0: float = Field(default=0.1, gt=0.0, description="Learning rate of round 0")
    decay: float = Field(default=0.998, gt=0.0, le=1.0, description="Per-round learning-rate decay")
    lam: float = Field(default=0.1, ge=0.0, alias="lambda", description="SAM perturbation radius")
    mu: float = Field(default=0.9, ge=0.0, lt=1.0, description="Heavy-ball momentum")
    grad_floor: float = Field(default=1e-12, ge=0.0, description="SAM zero-gradient guard")
    batch_size: int = Field(default=32, ge=1, description="Minibatch size, drawn with replacement")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


@dataclass
class OptState:
    """Momentum buffer; ``None`` means a zero buffer."""

    buffer: Optional[np.ndarray] = None


@dataclass
class LocalResult:
    x: np.ndarray
    opt_state: OptState
    batches: List[np.ndarray] = field(default_factory=list)
    # x_{i,0} .. x_{i,K-1}, only kept when tracing
    iterates: Optional[List[np.ndarray]] = None


def lr_at_round(cfg: OptimizerConfig, t: int) -> float:
    if t < 0:
        raise ConfigError(4001, "Round index must be non-negative", f"t={t}")
    return cfg.eta0 * cfg.decay**t


def sgd_step(
    spec: ModelSpec, x: np.ndarray, shard: Shard, batch: Optional[np.ndarray], eta: float
) -> np.ndarray:
    _, grad = loss_and_grad(spec, x, shard, batch)
    return x - eta * grad


def sam_step(
    spec: ModelSpec,
    x: np.ndarray,
    shard: Shard,
    batch: Optional[np.ndarray],
    eta: float,
    lam: float,
    grad_floor: float = 1e-12,
) -> np.ndarray:
    """
    Sharpness-aware step: ascend ``lam`` along the normalised gradient, then descend
    with the gradient taken there on the same minibatch.

    ``lam == 0`` evaluates a single gradient; a gradient norm at or below
    ``grad_floor`` skips the perturbation.
    """
    _, g1 = loss_and_grad(spec, x, shard, batch)
    if lam == 0.0:
        return x - eta * g1

    norm = float(np.linalg.norm(g1))
    if norm <= grad_floor:
        return x - eta * g1

    perturbed = x + lam * g1 / norm
    _, g = loss_and_grad(spec, perturbed, shard, batch)
    return x - eta * g


def momentum_step(
    spec: ModelSpec,
    x: np.ndarray,
    state: OptState,
    shard: Shard,
    batch: Optional[np.ndarray],
    eta: float,
    mu: float,
) -> Tuple[np.ndarray, OptState]:
    """Heavy ball: v ← μv + g, x ← x − ηv."""
    _, grad = loss_and_grad(spec, x, shard, batch)
    velocity = grad if state.buffer is None else mu * state.buffer + grad
    return x - eta * velocity, OptState(velocity)


def draw_batch(shard: Shard, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, shard.size, size=batch_size)


def local_train(
    spec: ModelSpec,
    x0: np.ndarray,
    shard: Shard,
    K: int,
    cfg: OptimizerConfig,
    eta: float,
    rng: np.random.Generator,
    opt_state: Optional[OptState] = None,
    trace: bool = False,
) -> LocalResult:
    """Run K local steps from ``x0``; one minibatch per step from ``rng``."""
    if K < 1:
        raise ConfigError(4002, "local_steps must be >= 1", f"K={K}")
    method = cfg.method or OptimizerMethod.SGD
    state = opt_state or OptState()

    x = x0
    batches: List[np.ndarray] = []
    iterates: Optional[List[np.ndarray]] = [] if trace else None
    for _ in range(K):
        if trace:
            iterates.append(x)
        batch = draw_batch(shard, cfg.batch_size, rng)
        batches.append(batch)
        if method == OptimizerMethod.SAM:
            x = sam_step(spec, x, shard, batch, eta, cfg.lam, cfg.grad_floor)
        elif method == OptimizerMethod.SGD_MOMENTUM:
            x, state = momentum_step(spec, x, state, shard, batch, eta, cfg.mu)
        else:
            x = sgd_step(spec, x, shard, batch, eta)

    return LocalResult(x=x, opt_state=state, batches=batches, iterates=iterates)
