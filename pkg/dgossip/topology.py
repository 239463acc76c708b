"""Communication topologies as symmetric doubly-stochastic mixing matrices.

Graphs are built with networkx and weighted with the Metropolis-Hastings rule
``w_ij = 1 / (1 + max(deg_i, deg_j))`` so that one scheme covers every kind.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dgossip.utils import ConfigError, DGossipException, get_module_logger

logger = get_module_logger()

RANDOM_K_MAX_RETRIES = 32
PSI_FORMULAS_PATH = Path(__file__).resolve().parents[1] / "data" / "psi_formulas.json"

# Stream tag mixed into the seed of per-round RandomK draws
TOPOLOGY_STREAM = 0x70F0


class TopologyKind(str, Enum):
    RING = "ring"
    GRID = "grid"
    EXPONENTIAL = "exponential"
    FULLY_CONNECTED = "fully_connected"
    RANDOM_K = "random_k"


class TopologySpec(BaseModel):
    kind: TopologyKind = Field(
        default=TopologyKind.RANDOM_K, description="Communication graph family"
    )
    m: int = Field(..., ge=2, description="Number of clients (graph nodes)")
    k: Optional[int] = Field(
        default=None, ge=1, description="Partners drawn per node (random_k only)"
    )
    seed: int = Field(default=0, ge=0, description="Base seed (random_k only)")

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def check_shape(self) -> "TopologySpec":
        if self.kind == TopologyKind.GRID and math.isqrt(self.m) ** 2 != self.m:
            raise ValueError(f"grid topology: perfect square required, got m={self.m}")
        if self.kind == TopologyKind.RANDOM_K:
            if self.k is None:
                raise ValueError("random_k topology requires k")
            if self.k >= self.m:
                raise ValueError(f"random_k topology requires k < m, got k={self.k}")
        return self

    @property
    def is_time_varying(self) -> bool:
        return self.kind == TopologyKind.RANDOM_K


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly-stochastic gossip weights with cached ψ."""

    m: int
    w: np.ndarray
    psi: float


@dataclass(frozen=True)
class ModifiedMatrix:
    """``(1+β)W − βI``; entries may be negative, rows still sum to one."""

    m: int
    w: np.ndarray
    psi_tilde: float
    beta: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _base_graph(spec: TopologySpec) -> nx.Graph:
    m = spec.m
    if spec.kind == TopologyKind.RING:
        return nx.cycle_graph(m)
    if spec.kind == TopologyKind.FULLY_CONNECTED:
        return nx.complete_graph(m)
    if spec.kind == TopologyKind.GRID:
        side = math.isqrt(m)
        torus = nx.grid_2d_graph(side, side, periodic=True)
        # (row, col) -> row * side + col
        return nx.relabel_nodes(torus, {(r, c): r * side + c for r, c in torus.nodes})
    if spec.kind == TopologyKind.EXPONENTIAL:
        g = nx.empty_graph(m)
        hop = 1
        while hop < m:
            for i in range(m):
                for j in ((i + hop) % m, (i - hop) % m):
                    if j != i:
                        g.add_edge(i, j)
            hop *= 2
        return g
    raise ConfigError(1001, "Unsupported static topology", str(spec.kind))


def random_k_adjacency(m: int, k: int, round_seed: int) -> np.ndarray:
    """Symmetrized union of k uniform partner draws per node, resampled until connected."""
    if not 1 <= k < m:
        raise ConfigError(1002, "random_k requires 1 <= k < m", f"m={m} k={k}")

    for sub_seed in range(RANDOM_K_MAX_RETRIES):
        rng = np.random.default_rng([round_seed, TOPOLOGY_STREAM, sub_seed])
        adjacency = np.zeros((m, m), dtype=bool)
        for i in range(m):
            others = np.delete(np.arange(m), i)
            partners = rng.choice(others, size=k, replace=False)
            adjacency[i, partners] = True
        adjacency |= adjacency.T
        if nx.is_connected(nx.from_numpy_array(adjacency.astype(np.int8))):
            return _frozen(adjacency)
        logger.debug(f"random_k m={m} k={k}: disconnected draw, retry {sub_seed + 1}")

    raise DGossipException(
        1003,
        "random_k topology did not connect",
        f"m={m} k={k} seed={round_seed} after {RANDOM_K_MAX_RETRIES} retries",
    )


def adjacency_matrix(spec: TopologySpec, round_index: int = 0) -> np.ndarray:
    """Boolean adjacency (no self loops) for the given spec and round."""
    if spec.kind == TopologyKind.RANDOM_K:
        round_seed = int(np.random.SeedSequence([spec.seed, round_index]).generate_state(1)[0])
        return random_k_adjacency(spec.m, spec.k, round_seed)
    graph = _base_graph(spec)
    adjacency = nx.to_numpy_array(graph, nodelist=range(spec.m), dtype=np.int8) > 0
    np.fill_diagonal(adjacency, False)
    return adjacency


def metropolis_weights(adjacency: np.ndarray) -> np.ndarray:
    degrees = adjacency.sum(axis=1)
    # np.maximum.outer is symmetric elementwise, so w is bitwise symmetric
    w = np.where(adjacency, 1.0 / (1.0 + np.maximum.outer(degrees, degrees)), 0.0)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def _eigenvalues(w: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(w)
    except np.linalg.LinAlgError as e:
        raise DGossipException(1004, "Eigen-solver did not converge", str(e)) from e


def spectral_gap(w: MixingMatrix | np.ndarray) -> float:
    """ψ = max(|λ₂|, |λ_m|) of a symmetric stochastic matrix."""
    matrix = w.w if isinstance(w, MixingMatrix) else np.asarray(w)
    eigenvalues = _eigenvalues(matrix)
    if eigenvalues.size < 2:
        return 0.0
    # ascending: eigenvalues[-1] is the principal 1
    return float(max(abs(eigenvalues[0]), abs(eigenvalues[-2])))


def mixing_from_adjacency(adjacency: np.ndarray) -> MixingMatrix:
    w = metropolis_weights(adjacency)
    eigenvalues = _eigenvalues(w)
    if eigenvalues.size > 1 and eigenvalues[-2] > 1.0 - 1e-10:
        raise ConfigError(1005, "Communication graph is disconnected", f"λ₂={eigenvalues[-2]}")
    psi = float(max(abs(eigenvalues[0]), abs(eigenvalues[-2]))) if eigenvalues.size > 1 else 0.0
    return MixingMatrix(m=w.shape[0], w=_frozen(w), psi=psi)


def build_mixing(spec: TopologySpec, round_index: int = 0) -> MixingMatrix:
    """Metropolis mixing matrix for ``spec`` (``round_index`` only matters for random_k)."""
    return mixing_from_adjacency(adjacency_matrix(spec, round_index))


def chebyshev_modified(w: MixingMatrix, beta: float) -> ModifiedMatrix:
    if not 0.0 <= beta < 1.0:
        raise ConfigError(1006, "beta must be < 1 and >= 0", f"beta={beta}")
    identity = np.eye(w.m)
    modified = (1.0 + beta) * w.w - beta * identity
    eigenvalues = _eigenvalues(w.w)
    mapped = (1.0 + beta) * eigenvalues[:-1] - beta
    psi_tilde = float(np.max(np.abs(mapped))) if mapped.size else 0.0
    return ModifiedMatrix(m=w.m, w=_frozen(modified), psi_tilde=psi_tilde, beta=beta)


def beta_theory_bound(psi: float) -> float:
    """Admissible Ole parameter cap from the convergence analysis (diagnostic only)."""
    if not 0.0 <= psi < 1.0:
        raise ConfigError(1007, "psi must lie in [0, 1)", f"psi={psi}")
    return min(math.sqrt(10.0) * (1.0 - psi) / 40.0, math.sqrt(5.0) / 30.0)


@lru_cache(maxsize=1)
def psi_formulas() -> Dict[str, str]:
    """Asymptotic ψ formulas quoted in the literature, keyed by topology kind."""
    try:
        with open(PSI_FORMULAS_PATH, "r") as f:
            return json.load(f)["formulas"]
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as e:
        logger.warning(f"Could not load ψ formula annotations: {e}")
        return {}


def single_node_mixing() -> MixingMatrix:
    """The trivial ``w = [1]`` of a one-client network."""
    return MixingMatrix(m=1, w=_frozen(np.ones((1, 1))), psi=0.0)


class TopologySchedule:
    """
    Per-round mixing matrices: built once for static kinds, regenerated for random_k.
    ``spec=None`` stands for a single client that only mixes with itself.
    """

    def __init__(self, spec: Optional[TopologySpec]):
        self.spec = spec
        if spec is None:
            self._static = single_node_mixing()
            return
        self._static = None if spec.is_time_varying else build_mixing(spec)
        if self._static is not None:
            logger.info(f"topology {spec.kind.value} m={spec.m} ψ={self._static.psi:.6f}")

    def at(self, round_index: int) -> MixingMatrix:
        if self._static is not None:
            return self._static
        return build_mixing(self.spec, round_index)
