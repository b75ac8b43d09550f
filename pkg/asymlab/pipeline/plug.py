"""Plugs carry run artifacts (configs, summaries, curves) between nodes.

An input is stale until its node has consumed the current value; setting a
value with a different content fingerprint makes it stale again and marks
everything downstream stale as well.
"""
import logging
from abc import abstractmethod

from ..utilities import get_hash

log = logging.getLogger(__name__)


def _changed(old, new):
    """Whether two values differ, unhashable values always count as new."""
    before, after = get_hash(old), get_hash(new)
    return before is None or after is None or before != after


class IPlug:
    """A named value slot on a node.

    Args:
        name (str): Unique among the node's inputs or outputs, no dots since
            ``node.plug`` is how connections are printed.
        node (INode): The owner.
    """

    def __init__(self, name, node):
        if "." in name:
            raise ValueError(f"Plug names can not contain dots: '{name}'")
        self.name = name
        self.node = node
        self.connections = []
        self._value = None
        self._is_dirty = True

    def __repr__(self):
        return f"{type(self).__name__}({self.node.name}.{self.name})"

    @property
    def value(self):
        return self._value

    @value.setter
    def value(self, value):
        self._store(value)

    def _store(self, value):
        changed = _changed(self._value, value)
        self._value = value
        if changed:
            self.is_dirty = True

    @property
    def is_dirty(self):
        """Whether the value changed since the node last consumed it."""
        return self._is_dirty

    @is_dirty.setter
    def is_dirty(self, status):
        self._is_dirty = status
        if status:
            self.node.mark_downstream_dirty()

    @abstractmethod
    def connect(self, plug):  # pragma: no cover
        raise NotImplementedError(f"{type(self).__name__} can not connect")

    def disconnect(self, plug):
        """Remove the link to ``plug`` on both ends, both become stale."""
        for near, far in ((self, plug), (plug, self)):
            if far in near.connections:
                near.connections.remove(far)
                near.is_dirty = True


class OutputPlug(IPlug):
    """A result of a node, pushed into every connected input."""

    def __init__(self, name, node):
        super().__init__(name, node)
        node.outputs[name] = self

    def connect(self, plug):
        """Feed this output into ``plug``.

        An input has one source, a previous one is disconnected first.

        Raises:
            TypeError: If ``plug`` is not an InputPlug.
            CycleError: If the link would close a cycle.
            ValueError: If the nodes live on different graphs.
        """
        if not isinstance(plug, InputPlug):
            raise TypeError(f"Cannot connect {type(self)} to {type(plug)}")
        self.node.graph.check_connection(self, plug)
        for source in list(plug.connections):
            source.disconnect(plug)
        self.connections.append(plug)
        plug.connections = [self]
        plug.value = self.value
        plug.is_dirty = True
        log.debug("Connected %r to %r", self, plug)

    def _store(self, value):
        super()._store(value)
        for plug in self.connections:
            plug.value = value


class InputPlug(IPlug):
    """An argument of a node, set directly or fed by one OutputPlug.

    Args:
        name (str): The argument name.
        node (INode): The owner.
        value (object): The initial value.
    """

    def __init__(self, name, node, value=None):
        super().__init__(name, node)
        node.inputs[name] = self
        self.value = value
        self.is_dirty = True

    def connect(self, plug):
        """Take the values of the OutputPlug ``plug``."""
        if not isinstance(plug, OutputPlug):
            raise TypeError(f"Cannot connect {type(self)} to {type(plug)}")
        plug.connect(self)
