import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from dgossip.data import Shard, load_datasets, partition
from dgossip.engine.graph import RoundGraph
from dgossip.engine.state import ClientState, ExperimentSetup
from dgossip.localopt import OptState
from dgossip.metrics import RoundRecord, rounds_to_target
from dgossip.model import ModelKind, classifier_spec, init_params, quadratic_testbed
from dgossip.schemas import ExperimentConfig
from dgossip.topology import MixingMatrix, TopologySchedule
from dgossip.utils import ConfigError, DivergenceError, get_module_logger

logger = get_module_logger()


@dataclass
class RoundOutcome:
    clients: List[ClientState]
    record: Optional[RoundRecord]
    participants: List[int]
    starts: np.ndarray
    locals: np.ndarray
    batches: List[List[np.ndarray]]
    delta: float


@dataclass
class ExperimentResult:
    records: List[RoundRecord]
    summary: Dict[str, Any]
    clients: List[ClientState] = field(default_factory=list)
    setup: Optional[ExperimentSetup] = None


def build_setup(cfg: ExperimentConfig) -> ExperimentSetup:
    """Dataset, partition, objective, x⁰ and topology schedule of a validated config."""
    schedule = None if cfg.is_central else TopologySchedule(cfg.topology)

    if cfg.model.kind == ModelKind.QUADRATIC:
        spec = quadratic_testbed(
            cfg.clients, cfg.model.dim, cfg.model.heterogeneity, cfg.seed, cfg.model.shared_curvature
        )
        # quadratic clients ignore their data; one placeholder row keeps batch draws valid
        shards = [Shard(i, np.zeros((1, 0)), np.zeros(1, dtype=np.int64)) for i in range(cfg.clients)]
        return ExperimentSetup(cfg, spec, shards, init_params(spec, cfg.seed), schedule)

    train, test = load_datasets(cfg.dataset, cfg.seed)
    if test.d != train.d:
        raise ConfigError(2017, "Train and test feature dimensions differ", f"{train.d} vs {test.d}")
    plan = partition(train, cfg.clients, cfg.partition, cfg.seed)
    spec = classifier_spec(cfg.model, train.d, train.num_classes)
    x0 = init_params(spec, cfg.seed)
    x0.setflags(write=False)
    return ExperimentSetup(cfg, spec, plan.shards(train), x0, schedule, train, test, plan)


class ExperimentRunner:
    def __init__(self, setup: ExperimentSetup, workers: int = 1, run_id: Optional[str] = None):
        self.setup = setup
        self.workers = workers
        self.run_id = run_id or uuid.uuid4().hex[:8]
        self.graph = RoundGraph({"setup": setup, "workers": workers}).get_compiled_graph()

    def initial_states(self) -> List[ClientState]:
        """x_i⁰ = z_i⁻¹ = x⁰ for every client."""
        x0 = self.setup.x0
        return [ClientState(x0, x0, OptState(), i) for i in range(self.setup.m)]

    def mixing_at(self, t: int) -> Optional[MixingMatrix]:
        if self.setup.schedule is None:
            return None
        return self.setup.schedule.at(t)

    def run_round(
        self, states: List[ClientState], t: int, w_t: Optional[MixingMatrix] = None
    ) -> RoundOutcome:
        result = self.graph.invoke(
            {"round": t, "clients": states, "mixing": w_t},
            config={"configurable": {"thread_id": self.run_id}},
        )
        return RoundOutcome(
            clients=result["next_clients"],
            record=result["record"],
            participants=result["participants"],
            starts=result["starts"],
            locals=result["locals"],
            batches=result["batches"],
            delta=result["delta"],
        )

    def initial_metrics(self) -> Dict[str, float]:
        train_loss, test_acc, grad_norm_sq = self.setup.evaluate(self.setup.x0)
        return {"train_loss": train_loss, "test_acc": test_acc, "grad_norm_sq": grad_norm_sq, "consensus": 0.0}

    def run(self, progress: bool = False) -> ExperimentResult:
        cfg = self.setup.cfg
        logger.info(
            f"{self.run_id} run {cfg.algorithm.value}: m={cfg.clients} T={cfg.rounds} "
            f"K={cfg.local_steps} beta={cfg.beta} workers={self.workers}"
        )
        started = time.perf_counter()
        initial = self.initial_metrics()

        states = self.initial_states()
        records: List[RoundRecord] = []
        for t in tqdm(range(cfg.rounds), desc=self.run_id, disable=not progress):
            try:
                outcome = self.run_round(states, t, self.mixing_at(t))
            except DivergenceError as e:
                logger.error(f"{self.run_id} diverged: {e}")
                raise
            states = outcome.clients
            if outcome.record is not None:
                records.append(outcome.record)
                r = outcome.record
                logger.debug(
                    f"{self.run_id} t={t} loss={r.train_loss:.6f} acc={r.test_acc:.4f} "
                    f"grad²={r.grad_norm_sq:.3e} Δ={r.delta_t:.3e}"
                )

        summary = self._summary(records, initial, time.perf_counter() - started)
        logger.info(f"{self.run_id} finished: best_acc={summary['best_acc']:.4f}")
        return ExperimentResult(records, summary, states, self.setup)

    def _summary(self, records: List[RoundRecord], initial: Dict[str, float], wall: float) -> Dict[str, Any]:
        cfg = self.setup.cfg
        accuracies = [initial["test_acc"]] + [r.test_acc for r in records]
        return {
            "config": cfg.echo(),
            "best_acc": max(accuracies),
            "rounds_to_targets": {str(target): hit for target, hit in rounds_to_target(records, cfg.targets)},
            "initial": initial,
            "final": records[-1].to_dict() if records else None,
            "final_delta_t": records[-1].delta_t if records else None,
            "wall_time_seconds": wall,
        }


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress: bool = False) -> ExperimentResult:
    return ExperimentRunner(build_setup(cfg), workers=workers).run(progress=progress)
