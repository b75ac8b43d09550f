import numpy as np
import pytest

from asymlab.envs import (
    BAD,
    BUY,
    CATEGORICAL_GAMMA,
    EAST,
    ENVIRONMENTS,
    GOOD,
    HEAVEN_LEFT,
    HEAVEN_RIGHT,
    NORTH,
    QUERY,
    RIGHT,
    SOUTH,
    UP,
    WEST,
    HeavenHellLayout,
    HeavenHellSpec,
    ShoppingSpec,
    build_heavenhell,
    build_mdp_in_disguise,
    build_shopping,
    heavenhell_fork_probes,
    make_environment,
)
from asymlab.errors import UnsupportedSizeError
from asymlab.oracle import belief_of_history
from asymlab.pomdp import validate


@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_registered_environments_are_valid(name):
    pomdp, terminals = make_environment(name)
    assert validate(pomdp, terminals) == []
    assert pomdp.name == name


def test_unknown_environment():
    with pytest.raises(KeyError):
        make_environment("frozenlake")


def test_goodbad_tables(goodbad):
    pomdp, terminals = goodbad
    assert terminals.is_empty
    assert pomdp.gamma == 0.9
    assert pomdp.emission().tolist() == [[1.0, 0.0], [0.5, 0.5]]
    assert pomdp.reward[:, GOOD].tolist() == [1.0, 1.0]
    assert pomdp.reward[:, BAD].tolist() == [0.0, 0.0]
    assert pomdp.transition[BAD, GOOD, BAD] == 1.0
    assert pomdp.label("states", GOOD) == "G"


@pytest.mark.parametrize(
    "n, n_states, n_obs", [(3, 28, 15), (4, 36, 19)]
)
def test_heavenhell_sizes(n, n_states, n_obs):
    pomdp, terminals = build_heavenhell(HeavenHellSpec(n))
    assert (pomdp.n_states, pomdp.n_actions, pomdp.n_obs) == (
        n_states,
        4,
        n_obs,
    )
    assert len(terminals.terminal_states) == 4
    assert pomdp.gamma == CATEGORICAL_GAMMA
    assert np.count_nonzero(pomdp.initial) == 2


@pytest.mark.parametrize("n", [2, 5])
def test_heavenhell_rejects_other_sizes(n):
    with pytest.raises(UnsupportedSizeError):
        build_heavenhell(HeavenHellSpec(n))


def test_heavenhell_layout_moves():
    layout = HeavenHellLayout(3)
    assert layout.n_positions == 14
    assert layout.priest == 13
    assert layout.cells[layout.start] == (0, -3)
    # walls block
    assert layout.move(layout.start, EAST) == layout.start
    assert layout.move(layout.fork, NORTH) == layout.fork
    assert layout.cells[layout.move(layout.start, SOUTH)] == (0, -4)
    assert layout.decode(layout.state(HEAVEN_RIGHT, 5)) == (HEAVEN_RIGHT, 5)


def test_priest_reveals_the_side():
    layout = HeavenHellLayout(3)
    left = layout.state(HEAVEN_LEFT, layout.priest)
    right = layout.state(HEAVEN_RIGHT, layout.priest)
    assert layout.observe(left) == 13
    assert layout.observe(right) == 14
    # everywhere else both sides look the same
    for position in range(layout.priest):
        assert layout.observe(
            layout.state(HEAVEN_LEFT, position)
        ) == layout.observe(layout.state(HEAVEN_RIGHT, position))


def _shortest_paths(pomdp, start, goal):
    """Distance and number of shortest action sequences, T deterministic."""
    counts = {start: 1}
    layer = [start]
    distance = 0
    while layer and goal not in counts:
        following = {}
        for s in layer:
            for action in range(pomdp.n_actions):
                target = int(np.argmax(pomdp.transition[s, action]))
                if target not in counts:
                    following[target] = following.get(target, 0) + counts[s]
        counts.update(following)
        layer = list(following)
        distance += 1
    return distance, counts.get(goal, 0)


@pytest.mark.parametrize("n", [3, 4])
@pytest.mark.parametrize("side", [HEAVEN_LEFT, HEAVEN_RIGHT])
def test_one_shortest_path_leads_to_the_priest(n, side):
    pomdp, terminals = build_heavenhell(HeavenHellSpec(n))
    layout = HeavenHellLayout(n)
    distance, paths = _shortest_paths(
        pomdp,
        layout.state(side, layout.start),
        layout.state(side, layout.priest),
    )
    assert distance == n + 1
    assert paths == 1
    history, state = layout.walk(side, [SOUTH] + [EAST] * n)
    assert state == layout.state(side, layout.priest)
    belief = belief_of_history(pomdp, history, terminals).probabilities
    assert belief[state] == 1.0


@pytest.mark.parametrize(
    "side, direction, reward",
    [
        (HEAVEN_LEFT, WEST, 1.0),
        (HEAVEN_LEFT, EAST, -1.0),
        (HEAVEN_RIGHT, EAST, 1.0),
        (HEAVEN_RIGHT, WEST, -1.0),
    ],
)
def test_heavenhell_exit_rewards(side, direction, reward):
    pomdp, terminals = build_heavenhell(HeavenHellSpec(3))
    layout = HeavenHellLayout(3)
    _, before = layout.walk(side, [NORTH] * 3 + [direction] * 2)
    _, after = layout.walk(side, [NORTH] * 3 + [direction] * 3)
    assert after in terminals.terminal_states
    assert pomdp.reward[before, direction] == reward
    assert np.all(pomdp.reward[after] == 0.0)
    assert np.all(pomdp.transition[after, :, after] == 1.0)


def test_fork_probes():
    probes = heavenhell_fork_probes(4)
    layout = HeavenHellLayout(4)
    assert [name for name, _, _ in probes] == [
        "heaven-left-no-priest",
        "heaven-right-no-priest",
        "heaven-left-priest",
        "heaven-right-priest",
    ]
    for name, history, state in probes:
        side, position = layout.decode(state)
        assert position == layout.fork
        assert side == (HEAVEN_LEFT if "left" in name else HEAVEN_RIGHT)
        visited = [o for _, o in history.steps]
        assert (layout.priest + side in visited) == (
            not name.endswith("no-priest")
        )
    assert probes[0][1] == probes[1][1]


@pytest.mark.parametrize("n, n_states, n_obs", [(5, 625, 50), (6, 1296, 72)])
def test_shopping_sizes(n, n_states, n_obs):
    pomdp, terminals = build_shopping(ShoppingSpec(n))
    assert (pomdp.n_states, pomdp.n_actions, pomdp.n_obs) == (
        n_states,
        6,
        n_obs,
    )
    assert len(terminals.terminal_transitions) == n * n


def test_shopping_rejects_other_sizes():
    with pytest.raises(UnsupportedSizeError):
        build_shopping(ShoppingSpec(4))


def test_shopping_rewards_and_observations():
    pomdp, terminals = build_shopping(ShoppingSpec(5))
    n_cells = 25
    item = 7
    at_item = item * n_cells + item
    at_start = item
    assert pomdp.reward[at_start, RIGHT] == -1.0
    assert pomdp.reward[at_start, QUERY] == -2.0
    assert pomdp.reward[at_start, BUY] == -5.0
    assert pomdp.reward[at_item, BUY] == 10.0
    assert terminals.ends(at_item, BUY, at_item)
    assert not terminals.ends(at_start, BUY, at_start)
    # the query reveals the item's cell and does not move the agent
    assert pomdp.transition[at_start, QUERY, at_start] == 1.0
    revealed = pomdp.observation[at_start, QUERY, at_start]
    assert revealed[n_cells + item] == 1.0
    moved = 5 * n_cells + item
    assert pomdp.transition[at_start, UP, moved] == 1.0
    assert pomdp.observation[at_start, UP, moved, 5] == 1.0
    assert pomdp.initial[:n_cells].sum() == pytest.approx(1.0)


def test_mdp_in_disguise(heavenhell3):
    pomdp, terminals = heavenhell3
    twin = build_mdp_in_disguise(pomdp)
    assert validate(twin, terminals) == []
    assert twin.n_obs == twin.n_states
    assert np.array_equal(twin.emission(), np.eye(pomdp.n_states))
    assert np.array_equal(twin.transition, pomdp.transition)
    assert twin.name == "heavenhell-3-mdp"


def test_random_pomdps_are_valid(make_random_pomdp):
    for seed in range(5):
        pomdp = make_random_pomdp(seed, n_states=4, n_actions=3, n_obs=2)
        assert validate(pomdp) == []
        assert 0.5 <= pomdp.gamma < 0.95
    assert make_random_pomdp(0) == make_random_pomdp(0)
    blind = make_random_pomdp(0, initial_observation=False)
    assert blind.initial_observation is None
