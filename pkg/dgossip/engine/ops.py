"""Pure round operators shared by the pipeline nodes."""

from typing import List

import numpy as np

from dgossip.topology import MixingMatrix, ModifiedMatrix
from dgossip.utils import DGossipException

# Stream tags mixed into per-round generator seeds
CLIENT_STREAM = 0xC11E
COORDINATOR_STREAM = 0xC00D


def ole_init(x_mixed: np.ndarray, z_prev: np.ndarray, beta: float) -> np.ndarray:
    """Opposite-lookahead start point x + β(x − z_prev)."""
    if x_mixed.shape != z_prev.shape:
        raise DGossipException(5001, "Ole init length mismatch", f"{x_mixed.shape} vs {z_prev.shape}")
    return x_mixed + beta * (x_mixed - z_prev)


def gossip_mix(local_models: np.ndarray, w: MixingMatrix | ModifiedMatrix | np.ndarray) -> np.ndarray:
    """Row i of the result is Σ_j w[i, j]·z_j, accumulated in ascending j."""
    matrix = w if isinstance(w, np.ndarray) else w.w
    m = matrix.shape[0]
    if local_models.shape[0] != m:
        raise DGossipException(5002, "Mixing matrix and client count disagree", f"{m} vs {local_models.shape[0]}")
    out = np.zeros(local_models.shape, dtype=float)
    for j in range(m):
        out += matrix[:, j : j + 1] * local_models[j]
    return out


def fixed_order_mean(rows: np.ndarray) -> np.ndarray:
    total = np.zeros(rows.shape[1:], dtype=float)
    for row in rows:
        total += row
    return total / rows.shape[0]


def client_rng(seed: int, client: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, CLIENT_STREAM, client, round_index])


def sample_participants(seed: int, round_index: int, m: int, fraction: float) -> List[int]:
    """⌈fraction·m⌉ distinct clients from the coordinator stream, ascending."""
    count = min(m, max(1, int(np.ceil(round(fraction * m, 9)))))
    rng = np.random.default_rng([seed, COORDINATOR_STREAM, round_index])
    return sorted(int(i) for i in rng.choice(m, size=count, replace=False))
