"""Per-round diagnostics, rounds-to-target tables and the coupled-run stability probe."""

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dgossip.data import LabeledDataset
from dgossip.model import ModelSpec, log_softmax, predict
from dgossip.utils import ConfigError, get_module_logger

logger = get_module_logger()

CSV_COLUMNS = ["t", "train_loss", "test_acc", "grad_norm_sq", "consensus", "delta_t", "v1", "v2", "lr"]


@dataclass(frozen=True)
class RoundRecord:
    t: int
    train_loss: float
    test_acc: float
    grad_norm_sq: float
    consensus: float
    delta_t: float
    v1: float = math.nan
    v2: float = math.nan
    lr: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def records_frame(records: Sequence[RoundRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in records], columns=CSV_COLUMNS)


def consensus_distance(xs: np.ndarray | Sequence[np.ndarray]) -> float:
    """(1/m) Σ ‖x_i − x̄‖²; exactly 0 when every row is identical."""
    xs = np.asarray(xs)
    if np.all(xs == xs[0]):
        return 0.0
    mean = xs.mean(axis=0)
    return float(np.mean(np.sum((xs - mean) ** 2, axis=1)))


def consistency_delta(z_prev: np.ndarray, x_mixed: np.ndarray) -> float:
    """Δ = (1/m) Σ ‖z_i − x_i‖² between local outputs and the models mixed from them."""
    return float(np.mean(np.sum((np.asarray(z_prev) - np.asarray(x_mixed)) ** 2, axis=1)))


def update_energies(
    x_before: np.ndarray,
    iterates: Sequence[Sequence[np.ndarray]],
    xbar_before: np.ndarray,
    xbar_after: np.ndarray,
) -> Tuple[float, float]:
    """
    V1 = (1/m) Σ_i Σ_{k<K} ‖x_{i,k} − x_i‖² (k = 0 is the Ole-initialised point),
    V2 = ‖x̄⁺ − x̄‖².
    """
    total = 0.0
    for x_i, path in zip(x_before, iterates):
        for x_ik in path:
            total += float(np.sum((x_ik - x_i) ** 2))
    v1 = total / len(iterates)
    v2 = float(np.sum((xbar_after - xbar_before) ** 2))
    return v1, v2


def eval_model(spec: ModelSpec, x: np.ndarray, test: LabeledDataset) -> Tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy (ties go to the lowest class index)."""
    logits = predict(spec, x, test.features)
    rows = np.arange(test.n)
    loss = float(-log_softmax(logits)[rows, test.labels].mean())
    accuracy = float(np.mean(np.argmax(logits, axis=1) == test.labels))
    return loss, accuracy


def rounds_to_target(
    series: Sequence[RoundRecord], targets: Sequence[float]
) -> List[Tuple[float, Optional[int]]]:
    result = []
    for target in targets:
        hit = next((r.t for r in series if r.test_acc >= target), None)
        result.append((target, hit))
    return result


def format_rounds(hit: Optional[int], rounds: int) -> str | int:
    return hit if hit is not None else f"> {rounds}"


@dataclass
class StabilityTrace:
    client: int
    sample: int
    first_draw_round: Optional[int] = None
    first_draw_step: Optional[int] = None
    distances: List[float] = field(default_factory=list)
    loss_gaps: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rounds = range(len(self.distances))
        return pd.DataFrame(
            {
                "t": list(rounds),
                "first_draw": [int(t == self.first_draw_round) for t in rounds],
                "mean_param_distance": self.distances,
                "heldout_loss_gap": self.loss_gaps,
            }
        )


def stability_probe(
    cfg,
    client: int,
    sample: int,
    replacement: Optional[Tuple[np.ndarray, int]] = None,
    workers: int = 1,
) -> StabilityTrace:
    """
    Run two coupled experiments whose training sets differ only at row ``sample`` of
    client ``client``'s shard. ``replacement=None`` keeps the original sample.
    """
    from dgossip.engine import ExperimentRunner, build_setup

    setup = build_setup(cfg)
    if setup.plan is None:
        raise ConfigError(6020, "Stability probe needs a classifier model", cfg.model.kind.value)
    if not 0 <= client < len(setup.shards) or not 0 <= sample < setup.shards[client].size:
        raise ConfigError(
            6021, "Swap indices out of range", f"client={client} sample={sample}"
        )
    if replacement is None:
        shard = setup.shards[client]
        replacement = (shard.features[sample], int(shard.labels[sample]))
    twin = setup.with_swapped_sample(client, sample, *replacement)

    runner = ExperimentRunner(setup, workers=workers, run_id="probe-a")
    twin_runner = ExperimentRunner(twin, workers=workers, run_id="probe-b")
    states, twin_states = runner.initial_states(), twin_runner.initial_states()
    trace = StabilityTrace(client=client, sample=sample)

    for t in range(cfg.rounds):
        w_t = runner.mixing_at(t)
        outcome = runner.run_round(states, t, w_t)
        twin_outcome = twin_runner.run_round(twin_states, t, w_t)
        states, twin_states = outcome.clients, twin_outcome.clients

        if trace.first_draw_round is None and client in outcome.participants:
            slot = outcome.participants.index(client)
            for k, batch in enumerate(outcome.batches[slot]):
                if np.any(batch == sample):
                    trace.first_draw_round, trace.first_draw_step = t, k
                    logger.info(f"swapped sample first drawn at round {t} step {k}")
                    break

        x = np.stack([s.x_mixed for s in states])
        x_twin = np.stack([s.x_mixed for s in twin_states])
        trace.distances.append(float(np.mean(np.linalg.norm(x - x_twin, axis=1))))
        loss, _ = eval_model(setup.spec, x.mean(axis=0), setup.test)
        twin_loss, _ = eval_model(setup.spec, x_twin.mean(axis=0), setup.test)
        trace.loss_gaps.append(abs(loss - twin_loss))

    return trace
