from abc import ABC, abstractmethod
from typing import Any

from langchain_core.runnables.config import RunnableConfig


class BaseInputNode(ABC):
    @abstractmethod
    def validate_and_parse(self, state: Any, config: RunnableConfig) -> Any:
        """
        Validate the incoming round state.

        Args:
            state (Any): Client states and round inputs

        Returns:
            Any: State update with derived round quantities

        Raises:
            NotImplementedError: Must be implemented in a subclass
        """
        pass
