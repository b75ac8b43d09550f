"""Experiment graphs: nodes exchanging data through plugs."""
# isort:skip_file
from .graph import (
    Graph,
    get_default_graph,
    reset_default_graph,
    set_default_graph,
)
from .evaluator import (
    LinearEvaluator,
    ProcessPoolEvaluator,
    ThreadedEvaluator,
)
from .node import INode, FunctionNode, Node
from .plug import InputPlug, OutputPlug
