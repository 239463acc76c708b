from langchain_core.runnables.config import RunnableConfig

from dgossip.engine.base import BaseRouterNode
from dgossip.engine.state import ExperimentSetup, RoundState
from dgossip.utils import get_module_logger

logger = get_module_logger()


class RouterNode(BaseRouterNode):
    def __init__(self, setup: ExperimentSetup):
        self.setup = setup

    def determine_next_step(self, state: RoundState, config: RunnableConfig) -> str:
        logger.debug(f"{config['configurable']['thread_id']} start")
        intent = "central" if self.setup.cfg.is_central else "decentralized"
        logger.debug(f"{config['configurable']['thread_id']} finish")
        return intent
