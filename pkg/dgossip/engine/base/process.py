from abc import ABC, abstractmethod
from typing import Any

from langchain_core.runnables.config import RunnableConfig

from dgossip.engine.state import ExperimentSetup
from dgossip.utils import get_module_logger

logger = get_module_logger()


class BaseProcessNode(ABC):
    """
    Base class for the compute stages of a communication round.

    Every stage works against one immutable ExperimentSetup (model spec, shards,
    validated config) and returns a partial state update.

    Attributes:
        setup (ExperimentSetup): Experiment the round belongs to
    """

    def __init__(self, setup: ExperimentSetup) -> None:
        self.setup = setup

    @property
    def cfg(self):
        return self.setup.cfg

    @abstractmethod
    def process(self, state: Any, config: RunnableConfig) -> Any:
        """
        Run this stage of the round.

        Args:
            state (Any): Current round state
            config (RunnableConfig): Invocation config (carries the run id)

        Returns:
            Any: Partial state update

        Raises:
            NotImplementedError: Must be implemented in a subclass
        """
        raise NotImplementedError("This method must be implemented in a subclass.")

    @staticmethod
    def _run_id(config: RunnableConfig) -> str:
        return config["configurable"]["thread_id"]
