from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

import numpy as np
from langchain_core.runnables.config import RunnableConfig

from dgossip.engine.base import BaseProcessNode
from dgossip.engine.ops import client_rng, fixed_order_mean, gossip_mix, ole_init, sample_participants
from dgossip.engine.state import ClientState, ExperimentSetup, RoundState
from dgossip.localopt import LocalResult, OptState, local_train
from dgossip.metrics import consistency_delta
from dgossip.utils import DivergenceError, get_module_logger

logger = get_module_logger()


class OleInitNode(BaseProcessNode):
    """Every client starts its local phase from x + β(x − z_prev)."""

    def process(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        logger.debug(f"{self._run_id(config)} start")
        beta = self.cfg.beta
        starts = np.stack([ole_init(c.x_mixed, c.z_prev, beta) for c in state["clients"]])
        logger.debug(f"{self._run_id(config)} finish")
        return {"participants": list(range(len(state["clients"]))), "starts": starts}


class ParticipantNode(BaseProcessNode):
    """Coordinator draws this round's participants; they start from the global model."""

    def process(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        logger.debug(f"{self._run_id(config)} start")
        clients = state["clients"]
        participants = sample_participants(
            self.cfg.seed, state["round"], len(clients), self.cfg.participation
        )
        starts = np.stack([clients[i].x_mixed for i in participants])
        logger.debug(f"{self._run_id(config)} finish")
        return {"participants": participants, "starts": starts}


class LocalTrainNode(BaseProcessNode):
    """K local steps per participant, fanned out over a thread pool."""

    def __init__(self, setup: ExperimentSetup, workers: int = 1):
        super().__init__(setup)
        self.workers = max(1, workers)

    def _train(self, client: int, start: np.ndarray, t: int, lr: float) -> LocalResult:
        return local_train(
            self.setup.spec,
            start,
            self.setup.shards[client],
            self.cfg.local_steps,
            self.cfg.optimizer,
            lr,
            client_rng(self.cfg.seed, client, t),
            opt_state=OptState(),
            trace=self.cfg.diagnostics,
        )

    def process(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        logger.debug(f"{self._run_id(config)} start")
        t, lr = state["round"], state["lr"]
        participants, starts = state["participants"], state["starts"]
        results: List[Optional[LocalResult]] = [None] * len(participants)

        def work(slot: int) -> None:
            results[slot] = self._train(participants[slot], starts[slot], t, lr)

        try:
            if self.workers == 1 or len(participants) == 1:
                for slot in range(len(participants)):
                    work(slot)
            else:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    list(pool.map(work, range(len(participants))))
        except DivergenceError as e:
            raise e.at_round(t) from e

        logger.debug(f"{self._run_id(config)} finish")
        return {
            "locals": np.stack([r.x for r in results]),
            "opt_states": [r.opt_state for r in results],
            "batches": [r.batches for r in results],
            "iterates": [r.iterates for r in results] if self.cfg.diagnostics else None,
        }


def _check_finite(rows: np.ndarray, t: int, participants: List[int]) -> None:
    bad = np.flatnonzero(~np.all(np.isfinite(rows), axis=1))
    if bad.size:
        raise DivergenceError(5007, "Non-finite parameters after communication", round=t, client=participants[int(bad[0])])


class GossipMixNode(BaseProcessNode):
    """x_i ← Σ_j w_ij z_j over all clients; z_prev ← z."""

    def process(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        logger.debug(f"{self._run_id(config)} start")
        local_models = state["locals"]
        mixed = gossip_mix(local_models, state["mixing"])
        _check_finite(mixed, state["round"], state["participants"])

        next_clients = [
            ClientState(x_mixed=mixed[i], z_prev=local_models[i], opt_state=opt, shard_id=c.shard_id)
            for i, (c, opt) in enumerate(zip(state["clients"], state["opt_states"]))
        ]
        delta = consistency_delta(local_models, mixed)
        logger.debug(f"{self._run_id(config)} finish")
        return {"next_clients": next_clients, "delta": delta}


class AggregateNode(BaseProcessNode):
    """Server model becomes the unweighted mean of the participants' local outputs."""

    def process(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        logger.debug(f"{self._run_id(config)} start")
        local_models = state["locals"]
        participants = state["participants"]
        global_model = fixed_order_mean(local_models)
        _check_finite(global_model[None, :], state["round"], participants[:1])

        slots = {client: slot for slot, client in enumerate(participants)}
        next_clients = []
        for c in state["clients"]:
            slot = slots.get(c.shard_id)
            if slot is None:
                next_clients.append(ClientState(global_model, c.z_prev, c.opt_state, c.shard_id))
            else:
                next_clients.append(
                    ClientState(global_model, local_models[slot], state["opt_states"][slot], c.shard_id)
                )
        delta = consistency_delta(local_models, np.broadcast_to(global_model, local_models.shape))
        logger.debug(f"{self._run_id(config)} finish")
        return {"next_clients": next_clients, "delta": delta}
