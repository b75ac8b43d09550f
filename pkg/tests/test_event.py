import pytest

from asymlab.event import Event, EventSet


def test_listeners_only_registered_once():
    def listener(x, y):
        pass

    event = Event("test")
    event.register(listener)
    event.register(listener)
    assert event.is_registered(listener)
    assert 1 == len(event._listeners)


def test_deregister_if_registered():
    def listener(x, y):
        pass

    event = Event("test")
    event.register(listener)
    event.deregister(listener)
    assert not event.is_registered(listener)

    event.deregister(listener)


def test_event_emit():
    received = []

    def listener(arg, kwarg):
        received.append((arg, kwarg))

    event = Event("test")
    event.register(listener)
    event.emit(123, kwarg="test")
    assert received == [(123, "test")]


def test_a_listener_may_deregister_while_emitting():
    event = Event("test")
    calls = []

    def once():
        calls.append("once")
        event.deregister(once)

    event.register(once)
    event.register(lambda: calls.append("always"))
    event.emit()
    event.emit()
    assert calls == ["once", "always", "always"]


def test_event_clear():
    def listener(arg, kwarg):
        pass

    event = Event("test")
    event.register(listener)
    event.clear()

    assert not event.is_registered(listener)
    assert len(event._listeners) == 0


def test_event_set():
    events = EventSet(("episode-finished", "target-updated"))
    seen = []

    @events.on("episode-finished")
    def report(curve, episode):
        seen.append(episode)

    events.on("target-updated", lambda timestep: seen.append(timestep))
    events["episode-finished"].emit(curve=None, episode=3)
    events["target-updated"].emit(timestep=40)
    assert seen == [3, 40]
    assert events["episode-finished"].is_registered(report)
    with pytest.raises(KeyError, match="available events"):
        events["probe-recorded"]
    events.clear()
    assert sorted(events) == ["episode-finished", "target-updated"]
    assert not events["episode-finished"].is_registered(report)
