from abc import ABC, abstractmethod
from typing import Any

from langchain_core.runnables.config import RunnableConfig


class BaseRouterNode(ABC):
    @abstractmethod
    def determine_next_step(self, state: Any, config: RunnableConfig) -> Any:
        """
        Evaluates the current state and names the branch to take.

        Args:
            state (Any): Current round state
            config (RunnableConfig): Invocation config (carries the run id)

        Returns:
            Any: Branch key

        Raises:
            NotImplementedError: Must be implemented in a subclass
        """
        pass
