from abc import ABC, abstractmethod
from typing import Any

from langchain_core.runnables.config import RunnableConfig


class BaseOutputNode(ABC):
    @abstractmethod
    def format_output(self, state: Any, config: RunnableConfig) -> Any:
        """
        Turn the finished round into its record.

        Args:
            state (Any): Round state after communication

        Returns:
            Any: State update carrying the record

        Raises:
            NotImplementedError: Must be implemented in a subclass
        """
        pass
