"""Client objectives over flat parameter vectors with exact analytic gradients.

Parameter layout for Logistic and Mlp: for every layer, the ``fan_in × fan_out``
weight matrix (row-major) followed by its ``fan_out`` bias.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dgossip.data import Shard
from dgossip.utils import ConfigError, DivergenceError, get_module_logger

logger = get_module_logger()

CURVATURE_RANGE = (0.5, 2.0)


class ModelKind(str, Enum):
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"
    MLP = "mlp"


class ModelConfig(BaseModel):
    kind: ModelKind = Field(default=ModelKind.LOGISTIC, description="Objective family")
    hidden: List[int] = Field(default_factory=lambda: [32], description="Mlp hidden layer widths")
    dim: int = Field(default=8, ge=1, description="Parameter count p of the quadratic testbed")
    heterogeneity: float = Field(default=1.0, ge=0.0, description="Spread of quadratic client optima")
    shared_curvature: bool = Field(default=False, description="Give every quadratic client the same A")

    model_config = ConfigDict(extra="forbid")


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    input_dim: int = 0
    num_classes: int = 0
    hidden: Tuple[int, ...] = ()
    quad_a: Optional[np.ndarray] = None
    quad_b: Optional[np.ndarray] = None
    x_star: Optional[np.ndarray] = None

    def layer_shapes(self) -> List[Tuple[int, int]]:
        if self.kind == ModelKind.LOGISTIC:
            return [(self.input_dim, self.num_classes)]
        if self.kind == ModelKind.MLP:
            widths = [self.input_dim, *self.hidden, self.num_classes]
            return list(zip(widths[:-1], widths[1:]))
        return []

    @property
    def param_count(self) -> int:
        if self.kind == ModelKind.QUADRATIC:
            return int(self.quad_b.shape[1])
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes())

    @property
    def is_classifier(self) -> bool:
        return self.kind != ModelKind.QUADRATIC


def classifier_spec(cfg: ModelConfig, input_dim: int, num_classes: int) -> ModelSpec:
    if cfg.kind == ModelKind.QUADRATIC:
        raise ConfigError(3001, "Quadratic specs come from quadratic_testbed", "")
    hidden = tuple(cfg.hidden) if cfg.kind == ModelKind.MLP else ()
    return ModelSpec(cfg.kind, input_dim, num_classes, hidden)


def _unpack(spec: ModelSpec, x: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        w = x[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = x[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Shared x⁰: Glorot-uniform weights with zero biases, zeros for quadratics."""
    if spec.kind == ModelKind.QUADRATIC:
        return np.zeros(spec.param_count)
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, fan_out in spec.layer_shapes():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(spec: ModelSpec, x: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Class scores (logits) for each row of ``features``."""
    layers = _unpack(spec, x)
    a = features
    for w, b in layers[:-1]:
        a = np.tanh(a @ w + b)
    w, b = layers[-1]
    return a @ w + b


def _cross_entropy(
    spec: ModelSpec, x: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray]:
    layers = _unpack(spec, x)
    activations = [features]
    for w, b in layers[:-1]:
        activations.append(np.tanh(activations[-1] @ w + b))
    w_out, b_out = layers[-1]
    logits = activations[-1] @ w_out + b_out

    rows = np.arange(labels.shape[0])
    log_probs = log_softmax(logits)
    loss = float(-log_probs[rows, labels].mean())

    delta = np.exp(log_probs)
    delta[rows, labels] -= 1.0
    delta /= labels.shape[0]

    grads: List[np.ndarray] = []
    for layer in range(len(layers) - 1, -1, -1):
        w, _ = layers[layer]
        grads.append(delta.sum(axis=0))
        grads.append((activations[layer].T @ delta).ravel())
        if layer > 0:
            delta = (delta @ w.T) * (1.0 - activations[layer] ** 2)
    grads.reverse()
    return loss, np.concatenate(grads)


def _quadratic(spec: ModelSpec, x: np.ndarray, client: int) -> Tuple[float, np.ndarray]:
    a = spec.quad_a[client]
    b = spec.quad_b[client]
    ax = a @ x
    return float(0.5 * x @ ax - b @ x), ax - b


def loss_and_grad(
    spec: ModelSpec, x: np.ndarray, shard: Shard, batch: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """Batch-mean loss and gradient of client ``shard.client_id`` (``batch=None``: full shard)."""
    if spec.kind == ModelKind.QUADRATIC:
        loss, grad = _quadratic(spec, x, shard.client_id)
    elif batch is None:
        loss, grad = _cross_entropy(spec, x, shard.features, shard.labels)
    else:
        loss, grad = _cross_entropy(spec, x, shard.features[batch], shard.labels[batch])

    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise DivergenceError(3002, "Non-finite loss or gradient", client=shard.client_id)
    return loss, grad


def full_objective(spec: ModelSpec, x: np.ndarray, shards: Sequence[Shard]) -> Tuple[float, np.ndarray]:
    """f(x) = (1/m) Σ f_i(x) over full shards, summed in client order."""
    total_loss = 0.0
    total_grad = np.zeros_like(x)
    for shard in shards:
        loss, grad = loss_and_grad(spec, x, shard)
        total_loss += loss
        total_grad += grad
    m = len(shards)
    return total_loss / m, total_grad / m


def quadratic_testbed(
    m: int, p: int, heterogeneity: float, seed: int, shared_curvature: bool = False
) -> ModelSpec:
    """
    Heterogeneous quadratics f_i(x) = ½xᵀA_i x − b_iᵀx.

    A_i = Q_i D_i Q_iᵀ with eigenvalues in [0.5, 2]; b_i = b̄ + heterogeneity·δ_i with
    Σδ_i = 0. The global optimum x* is stored for oracle checks.
    """
    if p < 1 or m < 1:
        raise ConfigError(3003, "Quadratic testbed needs p >= 1 and m >= 1", f"m={m} p={p}")
    rng = np.random.default_rng(seed)
    low, high = CURVATURE_RANGE

    def curvature() -> np.ndarray:
        q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        a = (q * rng.uniform(low, high, size=p)) @ q.T
        return 0.5 * (a + a.T)

    if shared_curvature:
        shared = curvature()
        quad_a = np.stack([shared] * m)
    else:
        quad_a = np.stack([curvature() for _ in range(m)])

    b_bar = rng.standard_normal(p)
    offsets = rng.standard_normal((m, p))
    offsets -= offsets.mean(axis=0)
    quad_b = b_bar + heterogeneity * offsets

    x_star = np.linalg.solve(quad_a.mean(axis=0), quad_b.mean(axis=0))
    for arr in (quad_a, quad_b, x_star):
        arr.setflags(write=False)
    return ModelSpec(ModelKind.QUADRATIC, quad_a=quad_a, quad_b=quad_b, x_star=x_star)
