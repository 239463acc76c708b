from dataclasses import dataclass, replace
from typing import Annotated, List, Optional, Tuple, TypedDict

import numpy as np

from dgossip.data import LabeledDataset, PartitionPlan, Shard
from dgossip.localopt import OptState
from dgossip.metrics import RoundRecord, eval_model
from dgossip.model import ModelSpec, full_objective
from dgossip.schemas import ExperimentConfig
from dgossip.topology import MixingMatrix, TopologySchedule
from dgossip.utils import ConfigError


@dataclass
class ClientState:
    """One client between rounds: mixed model, last local output, optimizer state."""

    x_mixed: np.ndarray
    z_prev: np.ndarray
    opt_state: OptState
    shard_id: int


@dataclass(frozen=True)
class ExperimentSetup:
    """Everything a run needs besides the client states."""

    cfg: ExperimentConfig
    spec: ModelSpec
    shards: List[Shard]
    x0: np.ndarray
    schedule: Optional[TopologySchedule] = None
    train: Optional[LabeledDataset] = None
    test: Optional[LabeledDataset] = None
    plan: Optional[PartitionPlan] = None

    @property
    def m(self) -> int:
        return len(self.shards)

    def evaluate(self, xbar: np.ndarray) -> Tuple[float, float, float]:
        """(train_loss, test_acc, ‖∇f(x̄)‖²) of an averaged model over the full shards."""
        loss, grad = full_objective(self.spec, xbar, self.shards)
        accuracy = 0.0
        if self.test is not None:
            _, accuracy = eval_model(self.spec, xbar, self.test)
        return loss, accuracy, float(grad @ grad)

    def with_swapped_sample(
        self, client: int, row: int, features: np.ndarray, label: int
    ) -> "ExperimentSetup":
        """Twin setup whose training set differs only at ``row`` of ``client``'s shard."""
        if self.train is None or self.plan is None:
            raise ConfigError(5010, "Sample swap needs a partitioned dataset", "")
        index = int(self.plan.assignments[client][row])
        train = self.train.with_sample(index, np.asarray(features, dtype=float), int(label))
        return replace(self, train=train, shards=self.plan.shards(train))


class RoundState(TypedDict, total=False):
    """State flowing through one communication round"""

    round: Annotated[int, "0-based communication round index t"]
    lr: Annotated[float, "Learning rate used by every local step of this round"]
    clients: Annotated[List[ClientState], "Client states entering the round"]
    mixing: Annotated[Optional[MixingMatrix], "Gossip matrix of this round (decentralized kinds)"]
    participants: Annotated[List[int], "Ascending ids of the clients training this round"]
    starts: Annotated[np.ndarray, "Rows x_{i,0}, one per participant"]
    locals: Annotated[np.ndarray, "Rows x_{i,K} (= z_i), one per participant"]
    opt_states: Annotated[List[OptState], "Optimizer state after the local phase, per participant"]
    batches: Annotated[List[List[np.ndarray]], "Minibatch row indices per participant and step"]
    iterates: Annotated[Optional[List[List[np.ndarray]]], "x_{i,0..K-1} per participant (diagnostics only)"]
    next_clients: Annotated[List[ClientState], "Client states leaving the round"]
    delta: Annotated[float, "Consistency term between local outputs and mixed models"]
    record: Annotated[Optional[RoundRecord], "Metrics of an evaluated round, None otherwise"]
