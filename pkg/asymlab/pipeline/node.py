"""Nodes are the steps of an experiment: train a seed, aggregate, report."""
import inspect
import json
import logging
import time
import uuid
from abc import ABCMeta, abstractmethod

from ..event import EventSet
from ..utilities import ArtifactEncoder
from .graph import get_default_graph
from .plug import InputPlug, OutputPlug

log = logging.getLogger(__name__)

MAX_VALUE_LENGTH = 10
MAX_LIST_VALUE_LENGTH = 60


def _own_graph(name):
    # pylint: disable=import-outside-toplevel, cyclic-import
    from .graph import Graph

    return Graph(name=name)


class INode(metaclass=ABCMeta):
    """A step with named input and output plugs.

    Subclasses create their plugs in ``__init__`` and implement ``compute``,
    which receives the input values as keyword arguments and returns a dict
    of output values.

    Args:
        name (str): Unique on the graph, defaults to the class name.
        identifier (str): Generated from the name if omitted.
        metadata (dict): Carried along untouched, e.g. the seed of a run.
        graph (Graph or str): The graph to join; "default" joins the default
            graph, None a new graph named after the node.
    """

    EVENT_TYPES = (
        "evaluation-omitted",
        "evaluation-started",
        "evaluation-finished",
        "evaluation-exception",
    )

    def __init__(self, name=None, identifier=None, metadata=None, graph=None):
        self.events = EventSet(self.EVENT_TYPES)
        self.name = type(self).__name__ if name is None else name
        self.identifier = identifier or f"{self.name}-{uuid.uuid4()}"
        self.inputs = {}
        self.outputs = {}
        self.metadata = metadata or {}
        self.omit = False
        self.stats = {}
        if graph is None:
            graph = _own_graph(self.name)
        elif graph == "default":
            graph = get_default_graph()
        self.graph = graph
        graph.add_node(self)

    def __str__(self):
        return self.node_repr()

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"

    @property
    def is_dirty(self):
        """Whether an input changed since the last evaluation."""
        return any(plug.is_dirty for plug in self.inputs.values())

    @property
    def parents(self):
        """The nodes feeding an input of this node."""
        return {
            source.node
            for plug in self.inputs.values()
            for source in plug.connections
        }

    @property
    def children(self):
        """The nodes fed by an output of this node."""
        return {
            target.node
            for plug in self.outputs.values()
            for target in plug.connections
        }

    def _reachable(self, neighbours):
        seen = {}
        stack = list(neighbours(self))
        while stack:
            node = stack.pop()
            if node.identifier in seen:
                continue
            seen[node.identifier] = node
            stack.extend(neighbours(node))
        return list(seen.values())

    @property
    def upstream_nodes(self):
        """Every node this node depends on."""
        return self._reachable(lambda node: node.parents)

    @property
    def downstream_nodes(self):
        """Every node depending on this node."""
        return self._reachable(lambda node: node.children)

    def input_values(self):
        """Input name to current value."""
        return {name: plug.value for name, plug in self.inputs.items()}

    def begin_evaluation(self):
        """Announce the evaluation and hand out the compute arguments."""
        self.events["evaluation-started"].emit(self)
        return self.input_values()

    def finish_evaluation(self, outputs, start_time, eval_time):
        """Publish computed outputs and mark the inputs consumed.

        Args:
            outputs (dict): Output name to value, as returned by compute.
            start_time (float): Epoch seconds when compute started.
            eval_time (float): Seconds compute took.

        Raises:
            KeyError: If compute returned a name that is not an output.
        """
        unknown = sorted(set(outputs or ()) - set(self.outputs))
        if unknown:
            raise KeyError(
                f"{self.name} computed '{unknown[0]}' but has no such "
                f"output, outputs are {sorted(self.outputs)}"
            )
        self.stats = {"eval_time": eval_time, "start_time": start_time}
        for name, value in (outputs or {}).items():
            self.outputs[name].value = value
        for plug in self.inputs.values():
            plug.is_dirty = False
        self.events["evaluation-finished"].emit(self)
        log.debug("Evaluated %s in %.3fs", self.name, eval_time)

    def evaluate(self):
        """Compute in this process.

        Returns:
            dict: The outputs, empty for omitted nodes.
        """
        if self.omit:
            self.events["evaluation-omitted"].emit(self)
            return {}
        kwargs = self.begin_evaluation()
        start_time = time.time()
        try:
            outputs = self.compute(**kwargs) or {}
        except Exception:
            self.events["evaluation-exception"].emit(self)
            raise
        self.finish_evaluation(outputs, start_time, time.time() - start_time)
        return outputs

    @abstractmethod
    def compute(self, *args, **kwargs):  # pragma: no cover
        """Turn the input values into a dict of output values."""
        raise NotImplementedError(f"{type(self).__name__} has no compute")

    def connect(self, other):
        """Link outputs to inputs of the same name.

        Args:
            other (INode or InputPlug): Every output whose name is an input
                of the node is linked, or the output named like the plug.

        Raises:
            ValueError: If no names match.
            KeyError: If no output is named like the plug.
            TypeError: For anything else.
        """
        if isinstance(other, InputPlug):
            if other.name not in self.outputs:
                raise KeyError(f"{self.name} has no output '{other.name}'")
            self.outputs[other.name].connect(other)
            return
        if not isinstance(other, INode):
            raise TypeError(f"Cannot connect outputs to {type(other)}")
        shared = [name for name in self.outputs if name in other.inputs]
        if not shared:
            raise ValueError(
                f"{other.name} has no inputs matching the outputs of "
                f"{self.name}"
            )
        for name in shared:
            self.outputs[name].connect(other.inputs[name])

    def __rshift__(self, other):
        """``train >> aggregate`` links the plugs with matching names."""
        self.connect(other)

    def mark_downstream_dirty(self):
        """Make every input fed by this node stale."""
        for plug in self.outputs.values():
            for target in plug.connections:
                target.is_dirty = True

    @staticmethod
    def _short_value(plug):
        if plug.value is None:
            return "<>"
        text = str(plug.value)
        if len(text) > MAX_VALUE_LENGTH:
            text = text[: MAX_VALUE_LENGTH - 3] + "..."
        return f"<{text}>"

    def node_repr(self):
        """The node as a box, inputs on the left and outputs on the right.

        ::

               +---------------------+
               |      aggregate      |
               |---------------------|
            -->o run0<>              |
               |          aggregate o---
               +---------------------+
        """
        inputs = {n: self._short_value(p) for n, p in self.inputs.items()}
        outputs = {n: self._short_value(p) for n, p in self.outputs.items()}
        indent = "   " if self.parents else ""
        labels = [n + v for n, v in [*inputs.items(), *outputs.items()]]
        width = max(len(text) for text in [self.name, *labels]) + 7
        border = f"{indent}+{'-' * width}+"
        lines = [border, f"{indent}|{self.name:^{width}}|"]
        lines.append(f"{indent}|{'-' * width}|")
        for name in sorted(inputs):
            arrow = "-->" if self.inputs[name].connections else indent
            lines.append(f"{arrow}{'o ' + name + inputs[name]:{width + 1}}|")
        for name in sorted(outputs):
            tail = "---" if self.outputs[name].connections else ""
            label = name + outputs[name]
            lines.append(f"{indent}|{label:>{width - 1}} o{tail}")
        lines.append(border)
        return "\n".join(lines)

    def list_repr(self):
        """The node's plugs, one per line.

        ::

            train-s0
              [i] seed: 0
              [o] summary >> aggregate.run0
        """
        lines = [self.name]
        for name, plug in sorted(self.inputs.items()):
            if plug.connections:
                source = plug.connections[0]
                lines.append(
                    f"  [i] {name} << {source.node.name}.{source.name}"
                )
                continue
            value = json.dumps(plug.value, cls=ArtifactEncoder)
            lines.append(f"  [i] {name}: {value[:MAX_LIST_VALUE_LENGTH]}")
        for name, plug in sorted(self.outputs.items()):
            line = f"  [o] {name}"
            if plug.connections:
                line += " >> " + ", ".join(
                    f"{target.node.name}.{target.name}"
                    for target in plug.connections
                )
            lines.append(line)
        return "\n".join(lines)

    def process_payload(self):
        """The (function, kwargs) a worker process evaluates.

        Raises:
            TypeError: Only FunctionNodes around importable functions can
                be evaluated in another process.
        """
        raise TypeError(
            f"{type(self).__name__} '{self.name}' can not be evaluated in a "
            "worker process, wrap a module level function in a FunctionNode"
        )


class FunctionNode(INode):
    """A node around a function returning a dict of outputs.

    The parameters of the function become the inputs, initialised with their
    defaults; extra keyword arguments set input values.
    """

    RESERVED_INPUT_NAMES = (
        "func",
        "name",
        "identifier",
        "inputs",
        "outputs",
        "metadata",
        "omit",
        "graph",
    )

    def __init__(
        self,
        func=None,
        outputs=None,
        name=None,
        identifier=None,
        metadata=None,
        graph=None,
        **kwargs,
    ):
        parameters = inspect.signature(func).parameters
        reserved = [p for p in parameters if p in self.RESERVED_INPUT_NAMES]
        if reserved:
            raise ValueError(
                f"{', '.join(reserved)} are reserved names and can not be "
                f"used as inputs, reserved are {self.RESERVED_INPUT_NAMES}"
            )
        super().__init__(
            name or getattr(func, "__name__", None),
            identifier,
            metadata,
            graph,
        )
        self.func = func
        self.__doc__ = func.__doc__
        for parameter in parameters.values():
            empty = parameter.default is inspect.Parameter.empty
            InputPlug(
                parameter.name, self, None if empty else parameter.default
            )
        for output in outputs or ():
            OutputPlug(output, self)
        for input_name, value in kwargs.items():
            self.inputs[input_name].value = value

    def __call__(self, **kwargs):
        """A fresh node around the same function, e.g. one per seed."""
        metadata = dict(self.metadata, **kwargs.pop("metadata", {}))
        return type(self)(
            func=self.func,
            outputs=list(self.outputs),
            metadata=metadata,
            **kwargs,
        )

    def compute(self, *args, **kwargs):
        return self.func(*args, **kwargs)

    def process_payload(self):
        return self.func, self.input_values()


def Node(*args, **kwargs):  # pylint: disable=invalid-name
    """Decorate a function into a FunctionNode.

    ::

        @Node(outputs=["curve"])
        def train(config, seed):
            ...
            return {"curve": curve}
    """
    cls = kwargs.pop("cls", FunctionNode)

    def wrap(func):
        return cls(func, *args, **kwargs)

    return wrap
