from langgraph.graph import StateGraph

from dgossip.engine.base import BaseGraph
from dgossip.engine.input import InputNode
from dgossip.engine.output import OutputNode
from dgossip.engine.process import (
    AggregateNode,
    GossipMixNode,
    LocalTrainNode,
    OleInitNode,
    ParticipantNode,
)
from dgossip.engine.router import RouterNode
from dgossip.engine.state import RoundState
from dgossip.utils import get_module_logger

logger = get_module_logger()


class RoundGraph(BaseGraph):
    """One communication round: Ole init or participant draw, local phase, mixing or aggregation."""

    def __init__(self, config):
        super().__init__(config)
        self.setup = config["setup"]
        self.workers = config.get("workers", 1)

    def _build_graph(self) -> StateGraph:
        # Create nodes
        input_node = InputNode(self.setup)
        router_node = RouterNode(self.setup)
        ole_init_node = OleInitNode(self.setup)
        participant_node = ParticipantNode(self.setup)
        local_train_node = LocalTrainNode(self.setup, self.workers)
        gossip_node = GossipMixNode(self.setup)
        aggregate_node = AggregateNode(self.setup)
        output_node = OutputNode(self.setup)

        # Create graph
        graph = StateGraph(RoundState)

        # Add nodes
        graph.add_node("input_node", input_node.validate_and_parse)
        graph.add_node("ole_init_node", ole_init_node.process)
        graph.add_node("participant_node", participant_node.process)
        graph.add_node("local_train_node", local_train_node.process)
        graph.add_node("gossip_node", gossip_node.process)
        graph.add_node("aggregate_node", aggregate_node.process)
        graph.add_node("output_node", output_node.format_output)

        # Add edges
        graph.add_conditional_edges(
            "input_node",
            router_node.determine_next_step,
            {"decentralized": "ole_init_node", "central": "participant_node"},
        )
        graph.add_edge("ole_init_node", "local_train_node")
        graph.add_edge("participant_node", "local_train_node")
        graph.add_conditional_edges(
            "local_train_node",
            router_node.determine_next_step,
            {"decentralized": "gossip_node", "central": "aggregate_node"},
        )
        graph.add_edge("gossip_node", "output_node")
        graph.add_edge("aggregate_node", "output_node")

        # Add start and end points
        graph.set_entry_point("input_node")
        graph.set_finish_point("output_node")

        return graph
