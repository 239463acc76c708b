from abc import ABC, abstractmethod
from typing import Any, Dict

from langgraph.graph import StateGraph
from langgraph.graph.state import CompiledStateGraph


class BaseGraph(ABC):
    """Base class for round pipelines"""

    def __init__(self, config: Dict[str, Any]):
        self.config = config

    @abstractmethod
    def _build_graph(self) -> StateGraph:
        """Wire the pipeline nodes"""
        pass

    def get_compiled_graph(self) -> CompiledStateGraph:
        """Return the compiled graph"""
        return self._build_graph().compile()
