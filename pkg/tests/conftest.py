import numpy as np
import pytest

from asymlab.agent import NetworkSizes
from asymlab.config import TrainConfig
from asymlab.envs import (
    GoodBadSpec,
    HeavenHellSpec,
    build_goodbad,
    build_heavenhell,
    random_pomdp,
)
from asymlab.pipeline import INode, InputPlug, OutputPlug, reset_default_graph
from asymlab.policies import ReactivePolicy


class NodeForTesting(INode):
    """
    +---------------------+
    |   NodeForTesting    |
    |---------------------|
    o in1<>               |
    o in2<>               |
    |                 out o
    |                out2 o
    +---------------------+
    """

    def __init__(self, name=None, in1=None, in2=None, **kwargs):
        super().__init__(name, **kwargs)
        OutputPlug("out", self)
        OutputPlug("out2", self)
        InputPlug("in1", self, in1)
        InputPlug("in2", self, in2)

    def compute(self, in1, in2):
        """Multiply the two inputs."""
        return {"out": in1 * in2, "out2": None}


@pytest.fixture
def clear_default_graph():
    reset_default_graph()


@pytest.fixture
def goodbad():
    """The good/bad POMDP at γ = 0.9 and its (empty) terminals."""
    return build_goodbad(GoodBadSpec(0.9))


@pytest.fixture
def goodbad_half():
    """The good/bad POMDP at γ = 0.5."""
    pomdp, _ = build_goodbad(GoodBadSpec(0.5))
    return pomdp


@pytest.fixture
def last_observation_policy():
    """Play the action named like the last observation."""
    return ReactivePolicy(np.eye(2))


@pytest.fixture
def heavenhell3():
    return build_heavenhell(HeavenHellSpec(3))


@pytest.fixture
def make_random_pomdp():
    """Factory of small random POMDPs keyed by a seed."""

    def make(seed, **kwargs):
        return random_pomdp(np.random.default_rng(seed), **kwargs)

    return make


@pytest.fixture
def tiny_sizes():
    return NetworkSizes(embedding=4, hidden=5, mlp=(6,))


@pytest.fixture
def tiny_config():
    """Small networks and a short budget, fast enough for unit tests."""
    return TrainConfig(
        lr_actor=0.001,
        lr_critic=0.001,
        lambda0=0.1,
        max_episode_steps=10,
        max_timesteps=60,
        target_update_period=25,
        embedding_size=4,
        hidden_size=5,
        mlp_sizes=(6,),
        probe_period=20,
    )
