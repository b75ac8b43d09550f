"""Events are emitted while experiments run.

Training loops and experiment graphs emit them so that progress can be
observed (logged, recorded, plotted) without the emitter knowing about it.
"""
import logging

log = logging.getLogger(__name__)


class Event:
    """Call the registered listeners with the arguments given to emit.

    The integrity of the listeners is not checked; a listener raising an
    exception aborts the emission and propagates to the emitter.
    """

    def __init__(self, name):
        """Initialize the list of listeners.

        Args:
            name (str): The (unique) name of the event, e.g.
                'episode-finished'.
        """
        self.name = name
        self._listeners = []

    def emit(self, *args, **kwargs):
        """Call all the listeners with the given args and kwargs."""
        for listener in list(self._listeners):
            listener(*args, **kwargs)

    def register(self, listener):
        """Register the given callable if it is not yet registered."""
        if not self.is_registered(listener):
            self._listeners.append(listener)

    def deregister(self, listener):
        """Deregister the given callable if it is registered."""
        if self.is_registered(listener):
            self._listeners.remove(listener)
            log.debug("%s deregistered from %s", listener, self.name)
        else:
            log.exception("%s was never registered to %s", listener, self.name)

    def is_registered(self, listener):
        """Whether the given callable is already registered."""
        return listener in self._listeners

    def clear(self):
        """Remove all listeners from this event."""
        for listener in list(self._listeners):
            self.deregister(listener)


class EventSet(dict):
    """A fixed set of named events, e.g. all events of a training run.

    Access works like a dict, ``events["episode-finished"].register(f)``,
    and unknown names raise a KeyError listing the available events.
    """

    def __init__(self, names):
        super().__init__((name, Event(name)) for name in names)

    def __missing__(self, key):
        raise KeyError(
            f"Unknown event '{key}', available events: {sorted(self)}"
        )

    def on(self, name, listener=None):
        """Register a listener on the named event and return the listener.

        Without a listener, a decorator is returned::

            @events.on("episode-finished")
            def report(curve, episode):
                ...
        """
        if listener is None:
            return lambda func: self.on(name, func)
        self[name].register(listener)
        return listener

    def clear(self):
        """Remove the listeners of all events (the events themselves stay)."""
        for event in self.values():
            event.clear()
