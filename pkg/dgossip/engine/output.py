import math
from typing import Any, Dict

import numpy as np
from langchain_core.runnables.config import RunnableConfig

from dgossip.engine.base import BaseOutputNode
from dgossip.engine.state import ExperimentSetup, RoundState
from dgossip.metrics import RoundRecord, consensus_distance, update_energies
from dgossip.utils import DivergenceError, get_module_logger

logger = get_module_logger()


class OutputNode(BaseOutputNode):
    def __init__(self, setup: ExperimentSetup):
        self.setup = setup

    def is_evaluated(self, t: int) -> bool:
        cfg = self.setup.cfg
        return t % cfg.eval_every == 0 or t == cfg.rounds - 1

    def format_output(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        """Metrics of the averaged model after the round"""
        logger.debug(f"{config['configurable']['thread_id']} start")
        t = state["round"]
        if not self.is_evaluated(t):
            logger.debug(f"{config['configurable']['thread_id']} finish")
            return {"record": None}

        after = np.stack([c.x_mixed for c in state["next_clients"]])
        xbar = after.mean(axis=0)
        try:
            train_loss, test_acc, grad_norm_sq = self.setup.evaluate(xbar)
        except DivergenceError as e:
            raise e.at_round(t) from e

        v1 = v2 = math.nan
        if self.setup.cfg.diagnostics:
            before = np.stack([c.x_mixed for c in state["clients"]])
            v1, v2 = update_energies(
                before[state["participants"]], state["iterates"], before.mean(axis=0), xbar
            )

        record = RoundRecord(
            t=t,
            train_loss=train_loss,
            test_acc=test_acc,
            grad_norm_sq=grad_norm_sq,
            consensus=consensus_distance(after),
            delta_t=state["delta"],
            v1=v1,
            v2=v2,
            lr=state["lr"],
        )
        logger.debug(f"{config['configurable']['thread_id']} finish")
        return {"record": record}
