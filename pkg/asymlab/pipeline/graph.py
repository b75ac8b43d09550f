"""Experiment graphs: training, aggregation and reporting nodes."""
import logging

from ascii_canvas import canvas, item

from ..errors import CycleError
from .evaluator import LinearEvaluator, ProcessPoolEvaluator, ThreadedEvaluator

log = logging.getLogger(__name__)

EVALUATORS = {
    "linear": LinearEvaluator,
    "threading": ThreadedEvaluator,
    "multiprocessing": ProcessPoolEvaluator,
}
HEADER_HEIGHT = 4
MARGIN = 2


class Graph:
    """Nodes of one experiment, looked up by their unique names.

    Args:
        name (str): Shown in logs and renderings, e.g. ``heavenhell-4-hs``.
        nodes (list of INode): Added on construction.
    """

    def __init__(self, name=None, nodes=None):
        self.name = name or type(self).__name__
        self.nodes = []
        for node in nodes or ():
            self.add_node(node)

    def __str__(self):
        return self.node_repr()

    def __repr__(self):
        return f"Graph({self.name!r}, {len(self.nodes)} nodes)"

    def __getitem__(self, name):
        found = [node for node in self.nodes if node.name == name]
        if not found:
            raise KeyError(f"Graph '{self.name}' has no node named '{name}'")
        return found[0]

    def __contains__(self, name):
        return any(node.name == name for node in self.nodes)

    @property
    def evaluation_matrix(self):
        """The nodes in dependency levels.

        A node sits one level below its deepest parent, so each level only
        depends on the levels above it and the nodes of one level can run
        concurrently.

        Returns:
            (list of list of INode): The levels, each sorted by name.
        """
        members = set(self.nodes)
        depths = {}

        def depth(node):
            if node not in depths:
                parents = node.parents & members
                depths[node] = 1 + max(map(depth, parents), default=-1)
            return depths[node]

        levels = {}
        for node in self.nodes:
            levels.setdefault(depth(node), []).append(node)
        return [
            sorted(levels[level], key=lambda node: node.name)
            for level in sorted(levels)
        ]

    @property
    def evaluation_sequence(self):
        """The levels of the evaluation matrix, flattened."""
        return [node for level in self.evaluation_matrix for node in level]

    def add_node(self, node):
        """Move ``node`` onto this graph.

        Raises:
            ValueError: If another node already has the name.
        """
        if node in self.nodes:
            log.warning(
                "Node '%s' is already on graph '%s'", node.name, self.name
            )
            return
        if node.name in self:
            raise ValueError(
                f"Graph '{self.name}' already has a node named "
                f"'{node.name}', node names on a graph are unique"
            )
        previous = getattr(node, "graph", None)
        if previous is not None and previous is not self:
            previous.nodes.remove(node)
        self.nodes.append(node)
        node.graph = self

    def delete_node(self, node):
        """Cut all links of ``node`` and drop it, unknown nodes are ignored."""
        if node not in self.nodes:
            return
        for plug in [*node.inputs.values(), *node.outputs.values()]:
            for other in list(plug.connections):
                plug.disconnect(other)
        self.nodes.remove(node)

    def check_connection(self, output_plug, input_plug):
        """Refuse links that would break the graph.

        Raises:
            CycleError: If the link would make a node depend on itself.
            ValueError: If the nodes belong to different graphs.
        """
        source, target = output_plug.node, input_plug.node
        if source is target:
            raise CycleError(f"Can't connect {source.name} to itself")
        if source in target.downstream_nodes:
            raise CycleError(
                f"Can't connect {source.name} to {target.name}, "
                f"{source.name} already depends on {target.name}"
            )
        if source.graph is not target.graph:
            raise ValueError(
                f"Nodes of graphs '{source.graph.name}' and "
                f"'{target.graph.name}' can not be connected"
            )

    def evaluate(
        self, mode="linear", skip_clean=False, max_workers=None, evaluator=None
    ):
        """Run the nodes in dependency order.

        Args:
            mode (str): One of ``EVALUATORS``: 'linear', 'threading' or
                'multiprocessing'. Pass None with ``evaluator``.
            skip_clean (bool): Only run nodes whose inputs changed.
            max_workers (int): Worker count of the parallel modes.
            evaluator (Evaluator): A configured evaluator instead of a mode.
        """
        if mode and evaluator:
            raise ValueError("Pass either a mode or an evaluator, not both")
        if evaluator is None:
            if mode not in EVALUATORS:
                raise ValueError(
                    f"Unknown mode: {mode}, expected one of "
                    f"{sorted(EVALUATORS)}"
                )
            evaluator_cls = EVALUATORS[mode]
            evaluator = (
                evaluator_cls()
                if evaluator_cls is LinearEvaluator
                else evaluator_cls(max_workers=max_workers)
            )
        log.info(
            "Evaluating graph '%s' with %s",
            self.name,
            type(evaluator).__name__,
        )
        evaluator.evaluate(graph=self, skip_clean=skip_clean)

    def _place_nodes(self, drawing):
        """Draw the node boxes level by level, left to right."""
        placed = {}
        x_pos = 0
        for level in self.evaluation_matrix:
            y_pos, width = 0, 0
            for node in level:
                box = item.Item(str(node), [x_pos, y_pos])
                placed[node] = box
                width = max(width, box.bbox[2] - box.bbox[0] + 4)
                y_pos += box.bbox[3] - box.bbox[1]
                drawing.add_item(box)
            x_pos += width
        for box in drawing.items:
            box.position[0] += MARGIN
            box.position[1] += HEADER_HEIGHT
        return placed, x_pos

    @staticmethod
    def _draw_links(drawing, placed):
        """Draw a line from each output row to the rows it feeds."""
        for node, box in placed.items():
            for row, name in enumerate(sorted(node.outputs)):
                start = [
                    box.position[0] + box.bbox[2],
                    box.position[1] + 3 + len(node.inputs) + row,
                ]
                for plug in node.outputs[name].connections:
                    target = placed[plug.node]
                    end = [
                        target.position[0],
                        target.position[1]
                        + 3
                        + sorted(plug.node.inputs).index(plug.name),
                    ]
                    drawing.add_item(item.Line(start, end), 0)

    def node_repr(self):
        """Render the graph with ascii-canvas, as printed by --show-graph."""
        drawing = canvas.Canvas()
        placed, width = self._place_nodes(drawing)
        drawing.add_item(
            item.Rectangle(width, drawing.bbox[3] + 1, [0, 0]), 0
        )
        drawing.add_item(item.Item(f"{self.name:^{width}}", [0, 1]), 0)
        drawing.add_item(item.Rectangle(width, 3, [0, 0]), 0)
        self._draw_links(drawing, placed)
        return drawing.render()

    def list_repr(self):
        """The graph name followed by each node's plugs and links."""
        return "\n ".join(
            [self.name]
            + [node.list_repr() for node in self.evaluation_sequence]
        )


_DEFAULT = {"graph": Graph(name="default")}


def get_default_graph():
    """The graph nodes join when created with ``graph="default"``."""
    return _DEFAULT["graph"]


def set_default_graph(graph):
    """Replace the default graph.

    Raises:
        TypeError: If ``graph`` is not a Graph.
    """
    if not isinstance(graph, Graph):
        raise TypeError(f"The default graph must be a Graph, not {graph!r}")
    _DEFAULT["graph"] = graph


def reset_default_graph():
    """Start over with an empty default graph."""
    set_default_graph(Graph(name="default"))
