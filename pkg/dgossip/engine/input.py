from typing import Any, Dict, List, Optional

from langchain_core.runnables.config import RunnableConfig
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from dgossip.engine.base import BaseInputNode
from dgossip.engine.state import ExperimentSetup, RoundState
from dgossip.localopt import lr_at_round
from dgossip.utils import DGossipException, get_module_logger

logger = get_module_logger()


class InputSchema(BaseModel):
    round: int = Field(..., ge=0, description="Round index")
    clients: List[Any] = Field(..., min_length=1, description="Client states entering the round")
    mixing: Optional[Any] = Field(default=None, description="Gossip matrix of this round")

    model_config = ConfigDict(extra="ignore", arbitrary_types_allowed=True)


class InputNode(BaseInputNode):
    def __init__(self, setup: ExperimentSetup):
        self.setup = setup

    def validate_and_parse(self, state: RoundState, config: RunnableConfig) -> Dict[str, Any]:
        """Check the round inputs and fix this round's learning rate"""
        logger.debug(f"{config['configurable']['thread_id']} start")
        try:
            input_data = InputSchema.model_validate(dict(state))
        except ValidationError as e:
            raise DGossipException(5003, "Invalid round input", str(e)) from e

        m = self.setup.m
        if len(input_data.clients) != m:
            raise DGossipException(5004, "Client count mismatch", f"{len(input_data.clients)} vs {m}")
        if not self.setup.cfg.is_central:
            if input_data.mixing is None:
                raise DGossipException(5005, "Decentralized round without mixing matrix", f"t={input_data.round}")
            if input_data.mixing.m != m:
                raise DGossipException(5006, "Mixing matrix size mismatch", f"{input_data.mixing.m} vs {m}")

        lr = lr_at_round(self.setup.cfg.optimizer, input_data.round)
        logger.debug(f"{config['configurable']['thread_id']} finish")
        return {"lr": lr, "record": None}
