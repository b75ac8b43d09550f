"""Constructors for the categorical benchmark POMDPs.

Every builder returns a ``(Pomdp, TerminalSpec)`` pair. Index layouts are
canonical and documented per builder so that exported files and critic
embeddings stay stable.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedSizeError
from .pomdp import NO_TERMINALS, History, Pomdp, TerminalSpec

log = logging.getLogger(__name__)

GOOD, BAD = 0, 1

NORTH, SOUTH, EAST, WEST = 0, 1, 2, 3
HEAVENHELL_ACTIONS = ("NORTH", "SOUTH", "EAST", "WEST")
HEAVEN_LEFT, HEAVEN_RIGHT = 0, 1

LEFT, RIGHT, UP, DOWN, QUERY, BUY = 0, 1, 2, 3, 4, 5
SHOPPING_ACTIONS = ("LEFT", "RIGHT", "UP", "DOWN", "QUERY", "BUY")

CATEGORICAL_GAMMA = 0.99


@dataclass(frozen=True)
class GoodBadSpec:
    """The two-state good/bad POMDP."""

    gamma: float = 0.9


@dataclass(frozen=True)
class HeavenHellSpec:
    """Heaven-Hell with corridor parameter n."""

    n: int = 3


@dataclass(frozen=True)
class ShoppingSpec:
    """Shopping on an n x n grid."""

    n: int = 5


def build_goodbad(spec=GoodBadSpec()):
    """The good/bad POMDP.

    States, actions and observations are ``{G, B}`` (index 0 is good). Each
    state transitions into itself, G always emits g while B emits g or b
    with probability 1/2, and R(s, a) = 1 iff a = g. The initial state is
    uniform and emits an initial observation before the first action.

    Args:
        spec (GoodBadSpec): The discount.

    Returns:
        (Pomdp, TerminalSpec): The POMDP and an empty terminal spec.
    """
    emission = np.array([[1.0, 0.0], [0.5, 0.5]])
    reward = np.zeros((2, 2))
    reward[:, GOOD] = 1.0
    pomdp = Pomdp(
        transition=np.stack([np.eye(2), np.eye(2)], axis=1),
        observation=emission,
        reward=reward,
        gamma=spec.gamma,
        initial=np.array([0.5, 0.5]),
        initial_observation=emission,
        labels={
            "states": ["G", "B"],
            "actions": ["g", "b"],
            "observations": ["g", "b"],
        },
        name="goodbad",
    )
    return pomdp, NO_TERMINALS


class HeavenHellLayout:
    """The T-shaped corridor of Heaven-Hell.

    Cells are (x, y) with the fork at (0, 0)::

        exit (-n, 0) ... fork (0, 0) ... exit (n, 0)     top corridor
                          (0, -1)
                            ...                           vertical corridor
                          (0, -n)  <- agent start
                          (0, -n-1) ... (n, -n-1)         bottom corridor
                                        ^ priest

    Positions are enumerated top corridor left to right, vertical corridor
    top to bottom, bottom corridor left to right; the priest comes last.
    State index = side * (4n + 2) + position, with side 0 = heaven left.
    Observation index = position for the 4n + 1 non-priest positions and
    4n + 1 + side at the priest.
    """

    MOVES = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0), WEST: (-1, 0)}

    def __init__(self, n):
        if n not in (3, 4):
            raise UnsupportedSizeError(
                f"Heaven-Hell size n={n} not in {{3, 4}}"
            )
        self.n = n
        self.cells = (
            [(x, 0) for x in range(-n, n + 1)]
            + [(0, y) for y in range(-1, -n - 1, -1)]
            + [(x, -n - 1) for x in range(0, n + 1)]
        )
        self.index = {cell: i for i, cell in enumerate(self.cells)}
        self.n_positions = len(self.cells)
        self.priest = self.n_positions - 1
        self.start = self.index[(0, -n)]
        self.fork = self.index[(0, 0)]
        self.exits = (self.index[(-n, 0)], self.index[(n, 0)])

    def move(self, position, action):
        """The position reached by a deterministic move, walls block."""
        x, y = self.cells[position]
        dx, dy = self.MOVES[action]
        return self.index.get((x + dx, y + dy), position)

    def state(self, side, position):
        """State index of (heaven side, position)."""
        return side * self.n_positions + position

    def decode(self, state):
        """(heaven side, position) of a state index."""
        return divmod(state, self.n_positions)

    def observe(self, state):
        """The observation emitted in a state."""
        side, position = self.decode(state)
        if position == self.priest:
            return self.priest + side
        return position

    def walk(self, side, actions):
        """The history produced by following ``actions`` from the start.

        Returns:
            (History, int): The history and the final state.
        """
        state = self.state(side, self.start)
        history = History(self.observe(state))
        for action in actions:
            _, position = self.decode(state)
            state = self.state(side, self.move(position, action))
            history = history.append(action, self.observe(state))
        return history, state

    def labels(self):
        """Names of states, actions and observations."""
        positions = [f"({x},{y})" for x, y in self.cells]
        positions[self.priest] = "priest"
        sides = ("heaven-left", "heaven-right")
        return {
            "states": [f"{side}:{pos}" for side in sides for pos in positions],
            "actions": list(HEAVENHELL_ACTIONS),
            "observations": positions[: self.priest]
            + [f"priest:{side}" for side in sides],
        }


def build_heavenhell(spec=HeavenHellSpec()):
    """Heaven-Hell: navigate to the priest, back to the fork and to heaven.

    Entering heaven's exit yields +1.0, hell's -1.0; exits are absorbing
    terminal states. The heaven side is drawn uniformly at the start.

    Args:
        spec (HeavenHellSpec): n in {3, 4}.

    Returns:
        (Pomdp, TerminalSpec): The POMDP and its exit states.

    Raises:
        UnsupportedSizeError: If n is not 3 or 4.
    """
    layout = HeavenHellLayout(spec.n)
    n_pos = layout.n_positions
    n_states, n_actions, n_obs = 2 * n_pos, 4, layout.priest + 2
    transition = np.zeros((n_states, n_actions, n_states))
    reward = np.zeros((n_states, n_actions))
    emission = np.zeros((n_states, n_obs))
    terminal_states = set()
    for side in (HEAVEN_LEFT, HEAVEN_RIGHT):
        heaven = layout.exits[side]
        for position in range(n_pos):
            s = layout.state(side, position)
            emission[s, layout.observe(s)] = 1.0
            if position in layout.exits:
                terminal_states.add(s)
                transition[s, :, s] = 1.0
                continue
            for action in range(n_actions):
                target = layout.move(position, action)
                transition[s, action, layout.state(side, target)] = 1.0
                if target in layout.exits:
                    reward[s, action] = 1.0 if target == heaven else -1.0
    initial = np.zeros(n_states)
    for side in (HEAVEN_LEFT, HEAVEN_RIGHT):
        initial[layout.state(side, layout.start)] = 0.5
    pomdp = Pomdp(
        transition=transition,
        observation=emission,
        reward=reward,
        gamma=CATEGORICAL_GAMMA,
        initial=initial,
        initial_observation=emission,
        labels=layout.labels(),
        name=f"heavenhell-{spec.n}",
    )
    return pomdp, TerminalSpec(terminal_states=terminal_states)


def heavenhell_fork_probes(n=4):
    """The four history-state pairs at the fork of Heaven-Hell.

    The agent stands at the fork; the probes differ by heaven's side and by
    whether the history visited the priest on the way.

    Returns:
        (list of (str, History, int)): Named (history, state) probes.
    """
    layout = HeavenHellLayout(n)
    direct = [NORTH] * n
    via_priest = [SOUTH] + [EAST] * n + [WEST] * n + [NORTH] * (n + 1)
    probes = []
    for priest, actions in (("no-priest", direct), ("priest", via_priest)):
        for side, side_name in (
            (HEAVEN_LEFT, "left"),
            (HEAVEN_RIGHT, "right"),
        ):
            history, state = layout.walk(side, actions)
            probes.append((f"heaven-{side_name}-{priest}", history, state))
    return probes


def build_shopping(spec=ShoppingSpec()):
    """Shopping: query the item's cell, remember it, walk there and buy.

    Cells are ``c = y * n + x`` with the agent starting in the corner cell
    0. State index = agent cell * n² + item cell. Observation index = agent
    cell after any non-QUERY action and n² + item cell after QUERY.

    Rewards are -1.0 per move (blocked or not), -2.0 per QUERY, -5.0 for
    BUY in the wrong cell (the episode continues) and +10.0 for BUY in the
    item's cell, which ends the episode.

    Args:
        spec (ShoppingSpec): n in {5, 6}.

    Returns:
        (Pomdp, TerminalSpec): The POMDP and its terminal BUY transitions.

    Raises:
        UnsupportedSizeError: If n is not 5 or 6.
    """
    n = spec.n
    if n not in (5, 6):
        raise UnsupportedSizeError(f"Shopping size n={n} not in {{5, 6}}")
    n_cells = n * n
    n_states, n_actions, n_obs = n_cells * n_cells, 6, 2 * n_cells
    moves = {LEFT: (-1, 0), RIGHT: (1, 0), UP: (0, 1), DOWN: (0, -1)}

    def moved(cell, action):
        y, x = divmod(cell, n)
        dx, dy = moves[action]
        if 0 <= x + dx < n and 0 <= y + dy < n:
            return (y + dy) * n + x + dx
        return cell

    transition = np.zeros((n_states, n_actions, n_states))
    observation = np.zeros((n_actions, n_states, n_obs))
    reward = np.zeros((n_states, n_actions))
    terminal_transitions = set()
    for agent in range(n_cells):
        for item in range(n_cells):
            s = agent * n_cells + item
            for action in range(n_actions):
                if action in moves:
                    next_s = moved(agent, action) * n_cells + item
                    reward[s, action] = -1.0
                else:
                    next_s = s
                transition[s, action, next_s] = 1.0
                if action == QUERY:
                    reward[s, action] = -2.0
            if agent == item:
                reward[s, BUY] = 10.0
                terminal_transitions.add((s, BUY))
            else:
                reward[s, BUY] = -5.0
    # O(o | s, a, s') depends on (a, s') only
    next_states = np.arange(n_states)
    agent_obs = next_states // n_cells
    item_obs = n_cells + next_states % n_cells
    for action in range(n_actions):
        obs = item_obs if action == QUERY else agent_obs
        observation[action, next_states, obs] = 1.0
    initial = np.zeros(n_states)
    initial[:n_cells] = 1.0 / n_cells
    initial_observation = np.zeros((n_states, n_obs))
    agent_cells = np.arange(n_states) // n_cells
    initial_observation[np.arange(n_states), agent_cells] = 1.0
    cells = [f"({c % n},{c // n})" for c in range(n_cells)]
    pomdp = Pomdp(
        transition=transition,
        observation=observation,
        reward=reward,
        gamma=CATEGORICAL_GAMMA,
        initial=initial,
        initial_observation=initial_observation,
        labels={
            "states": [f"agent{a}:item{i}" for a in cells for i in cells],
            "actions": list(SHOPPING_ACTIONS),
            "observations": [f"agent{c}" for c in cells]
            + [f"item{c}" for c in cells],
        },
        name=f"shopping-{n}",
    )
    return pomdp, TerminalSpec(terminal_transitions=terminal_transitions)


def build_mdp_in_disguise(pomdp):
    """The fully observable twin of a POMDP: observation = state identity.

    Transition, reward, discount and initial distribution are kept; every
    step (and the initial observation) reveals the state exactly.
    """
    identity = np.eye(pomdp.n_states)
    return Pomdp(
        transition=pomdp.transition,
        observation=identity,
        reward=pomdp.reward,
        gamma=pomdp.gamma,
        initial=pomdp.initial,
        initial_observation=identity,
        labels={
            key: value
            for key, value in pomdp.labels.items()
            if key in ("states", "actions")
        },
        name=f"{pomdp.name}-mdp",
    )


def random_pomdp(
    rng,
    n_states=3,
    n_actions=2,
    n_obs=2,
    gamma=None,
    initial_observation=True,
    state_only_observations=False,
):
    """A random small POMDP with Dirichlet(1) rows.

    Args:
        rng (numpy.random.Generator): The random stream.
        n_states (int): Number of states.
        n_actions (int): Number of actions.
        n_obs (int): Number of observations.
        gamma (float): The discount, drawn from [0.5, 0.95) if None.
        initial_observation (bool): Whether an initial observation is
            emitted before the first action.
        state_only_observations (bool): Whether O depends on s' only.
    """
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if state_only_observations:
        observation = rng.dirichlet(np.ones(n_obs), size=n_states)
    else:
        observation = rng.dirichlet(
            np.ones(n_obs), size=(n_states, n_actions, n_states)
        )
    return Pomdp(
        transition=transition,
        observation=observation,
        reward=rng.uniform(-1.0, 1.0, size=(n_states, n_actions)),
        gamma=rng.uniform(0.5, 0.95) if gamma is None else gamma,
        initial=rng.dirichlet(np.ones(n_states)),
        initial_observation=(
            rng.dirichlet(np.ones(n_obs), size=n_states)
            if initial_observation
            else None
        ),
        name="random",
    )


ENVIRONMENTS = {
    "goodbad": lambda: build_goodbad(GoodBadSpec()),
    "heavenhell-3": lambda: build_heavenhell(HeavenHellSpec(3)),
    "heavenhell-4": lambda: build_heavenhell(HeavenHellSpec(4)),
    "shopping-5": lambda: build_shopping(ShoppingSpec(5)),
    "shopping-6": lambda: build_shopping(ShoppingSpec(6)),
}


def make_environment(name):
    """Build a registered environment by name.

    Raises:
        KeyError: If the name is not registered.
    """
    try:
        builder = ENVIRONMENTS[name]
    except KeyError as exc:
        raise KeyError(
            f"Unknown environment '{name}', available: {sorted(ENVIRONMENTS)}"
        ) from exc
    log.debug("Building environment %s", name)
    return builder()
