from .input import BaseInputNode
from .process import BaseProcessNode
from .output import BaseOutputNode
from .graph import BaseGraph
from .router import BaseRouterNode

__all__ = [
    "BaseInputNode",
    "BaseProcessNode",
    "BaseRouterNode",
    "BaseOutputNode",
    "BaseGraph",
]
