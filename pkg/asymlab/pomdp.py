"""Tabular POMDPs, their validation, simulation and trajectory bookkeeping.

All tables are dense numpy arrays indexed as follows::

    transition[s, a, s']           Pr(s' | s, a)
    observation[s, a, s', o]       Pr(o | s, a, s')
    reward[s, a]                   R(s, a)
    initial[s]                     Pr(s_0 = s)
    initial_observation[s, o]      Pr(o_0 = o | s_0 = s), optional

The optional initial observation is emitted before the first action, as if
through a designated null action. Histories then start with an observation,
e.g. the good/bad history ``[g]`` is ``History(initial=0)``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError

log = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-9
POLICY_TOLERANCE = 1e-6


def _frozen(array):
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


def is_distribution(probs, tolerance=DISTRIBUTION_TOLERANCE):
    """Whether the vector is non-negative and sums to one."""
    probs = np.asarray(probs, dtype=np.float64)
    return (
        probs.ndim == 1
        and probs.size > 0
        and bool(np.all(probs >= 0.0))
        and abs(float(probs.sum()) - 1.0) <= tolerance
    )


def sample_index(probs, rng):
    """Draw an index from the categorical distribution ``probs``.

    Inverse-cdf sampling consumes exactly one uniform draw of the stream,
    which keeps episodes reproducible across numpy versions.
    """
    cumulative = np.cumsum(probs)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1]))
    return min(index, len(cumulative) - 1)


class DiscreteDistribution:
    """A probability vector over a finite index set."""

    def __init__(self, probabilities):
        self.probabilities = _frozen(probabilities)

    def __len__(self):
        return len(self.probabilities)

    def __getitem__(self, index):
        return self.probabilities[index]

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.probabilities, other.probabilities)

    def __repr__(self):
        return f"DiscreteDistribution({self.probabilities.tolist()})"

    @property
    def is_valid(self):
        """Every entry >= 0 and the entries sum to one within 1e-9."""
        return is_distribution(self.probabilities)

    def sample(self, rng):
        """Draw an index."""
        return sample_index(self.probabilities, rng)


class Pomdp:
    """A tabular POMDP ⟨S, A, O, T, O, R, γ, initial distribution⟩.

    The tables are copied into read-only float64 arrays, a Pomdp is
    immutable after construction. Construction does not check the table
    contents, use :func:`validate` to get diagnostics.
    """

    def __init__(
        self,
        transition,
        observation,
        reward,
        gamma,
        initial,
        initial_observation=None,
        labels=None,
        name=None,
    ):
        """Initialize the tables.

        Args:
            transition (array): Shape (S, A, S).
            observation (array): Shape (S, A, S, O); or (A, S, O) when it
                does not depend on the previous state; or (S, O) when it
                depends on the next state only. Compact tables are kept in
                ``observation_table`` and exposed as a read-only broadcast
                view of shape (S, A, S, O).
            reward (array): Shape (S, A).
            gamma (float): The discount in [0, 1).
            initial (array): Shape (S,).
            initial_observation (array): Optional, shape (S, O).
            labels (dict): Optional lists of names under the keys 'states',
                'actions' and 'observations'.
            name (str): Optional name of the environment.
        """
        self.transition = _frozen(transition)
        observation = np.asarray(observation, dtype=np.float64)
        while observation.ndim < 4:
            observation = observation[np.newaxis]
        self.observation_table = _frozen(observation)
        try:
            self.observation = np.broadcast_to(
                self.observation_table,
                self.transition.shape[:2] + observation.shape[2:],
            )
        except ValueError:
            self.observation = self.observation_table
        self.reward = _frozen(reward)
        self.gamma = float(gamma)
        self.initial = _frozen(initial)
        self.initial_observation = (
            None
            if initial_observation is None
            else _frozen(initial_observation)
        )
        self.labels = {
            key: list(value) for key, value in (labels or {}).items()
        }
        self.name = name or self.__class__.__name__

    def __repr__(self):
        return (
            f"Pomdp(name={self.name!r}, states={self.n_states}, "
            f"actions={self.n_actions}, observations={self.n_obs}, "
            f"gamma={self.gamma})"
        )

    def __eq__(self, other):
        if not isinstance(other, Pomdp):
            return NotImplemented
        if (self.initial_observation is None) != (
            other.initial_observation is None
        ):
            return False
        return (
            self.gamma == other.gamma
            and np.array_equal(self.transition, other.transition)
            and (
                np.array_equal(self.observation_table, other.observation_table)
                if self.observation_table.shape
                == other.observation_table.shape
                else np.array_equal(self.observation, other.observation)
            )
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.initial, other.initial)
            and (
                self.initial_observation is None
                or np.array_equal(
                    self.initial_observation, other.initial_observation
                )
            )
        )

    __hash__ = None

    @property
    def n_states(self):
        """Number of states."""
        return self.transition.shape[0]

    @property
    def n_actions(self):
        """Number of actions."""
        return self.transition.shape[1]

    @property
    def n_obs(self):
        """Number of observations."""
        return self.observation.shape[-1]

    @property
    def max_abs_reward(self):
        """The largest reward magnitude, used by truncation bounds."""
        return float(np.max(np.abs(self.reward))) if self.reward.size else 0.0

    def label(self, kind, index):
        """The human readable name of an index, falls back to the index.

        Args:
            kind (str): One of 'states', 'actions', 'observations'.
            index (int): The index to name.
        """
        names = self.labels.get(kind)
        if names and 0 <= index < len(names):
            return names[index]
        return str(index)

    def observation_is_state_only(self, tolerance=0.0):
        """Whether O(o | s, a, s') depends on the next state s' only."""
        table = self.observation_table
        return bool(np.all(np.abs(table - table[:1, :1]) <= tolerance))

    def emission(self):
        """The state-only emission table Pr(o | s'), shape (S, O).

        Raises:
            ContractViolationError: If the observation function depends on
                the previous state or the action.
        """
        if not self.observation_is_state_only():
            raise ContractViolationError(
                f"Observation function of {self.name} depends on (s, a)"
            )
        return self.observation_table[0, 0]

    def with_gamma(self, gamma):
        """A copy of this POMDP with another discount."""
        return Pomdp(
            self.transition,
            self.observation_table,
            self.reward,
            gamma,
            self.initial,
            initial_observation=self.initial_observation,
            labels=self.labels,
            name=self.name,
        )

    def check_state(self, s):
        """Raise a ContractViolationError if s is not a state index."""
        if not 0 <= int(s) < self.n_states:
            raise ContractViolationError(
                f"State {s} out of range [0, {self.n_states}) in {self.name}"
            )

    def check_action(self, a):
        """Raise a ContractViolationError if a is not an action index."""
        if not 0 <= int(a) < self.n_actions:
            raise ContractViolationError(
                f"Action {a} out of range [0, {self.n_actions}) in "
                f"{self.name}"
            )

    def check_observation(self, o):
        """Raise a ContractViolationError if o is not an observation index."""
        if not 0 <= int(o) < self.n_obs:
            raise ContractViolationError(
                f"Observation {o} out of range [0, {self.n_obs}) in "
                f"{self.name}"
            )


@dataclass(frozen=True)
class TerminalSpec:
    """Where episodes end.

    Attributes:
        terminal_states (frozenset of int): Absorbing states with zero future
            reward; entering one ends the episode.
        terminal_transitions (frozenset of (int, int)): State-action pairs
            whose execution ends the episode, whatever the next state.
    """

    terminal_states: frozenset = frozenset()
    terminal_transitions: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(
            self, "terminal_states", frozenset(map(int, self.terminal_states))
        )
        object.__setattr__(
            self,
            "terminal_transitions",
            frozenset((int(s), int(a)) for s, a in self.terminal_transitions),
        )

    @property
    def is_empty(self):
        """Whether episodes never end on their own."""
        return not self.terminal_states and not self.terminal_transitions

    def ends(self, s, a, next_s):
        """Whether the step (s, a) -> next_s ends the episode."""
        return (
            next_s in self.terminal_states
            or (s, a) in self.terminal_transitions
        )

    def continuation(self, n_states, n_actions):
        """Mask of shape (S, A): 0 where executing (s, a) ends the episode.

        Terminal states keep their mask at 1, they are absorbing with zero
        reward and thus contribute nothing anyway.
        """
        mask = np.ones((n_states, n_actions))
        for s, a in self.terminal_transitions:
            mask[s, a] = 0.0
        return mask

    def to_dict(self):
        """Plain representation for manifests."""
        return {
            "terminal_states": sorted(self.terminal_states),
            "terminal_transitions": sorted(
                list(pair) for pair in self.terminal_transitions
            ),
        }


NO_TERMINALS = TerminalSpec()


@dataclass(frozen=True)
class History:
    """An alternating action-observation sequence.

    Attributes:
        initial (int): The pre-action initial observation, or None for
            POMDPs without one.
        steps (tuple of (int, int)): The (action, observation) pairs.
    """

    initial: object = None
    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "steps", tuple((int(a), int(o)) for a, o in self.steps)
        )

    def __len__(self):
        return len(self.steps)

    def __repr__(self):
        return f"History(initial={self.initial}, steps={list(self.steps)})"

    @classmethod
    def from_sequence(cls, initial, actions, observations):
        """Build a history from aligned action and observation sequences."""
        if len(actions) != len(observations):
            raise ContractViolationError(
                "Actions and observations must have the same length"
            )
        return cls(initial, tuple(zip(actions, observations)))

    def append(self, action, observation):
        """The history ``hao``."""
        return History(
            self.initial, self.steps + ((int(action), int(observation)),)
        )

    def prefix(self, length):
        """The history made of the first ``length`` steps."""
        return History(self.initial, self.steps[:length])

    @property
    def last_observation(self):
        """o_h, the most recent observation (None for an empty history
        without initial observation)."""
        if self.steps:
            return self.steps[-1][1]
        return self.initial

    def pairs(self, start_action=None):
        """The history as a list of (action, observation) input pairs.

        The initial observation, if any, is paired with ``start_action``.
        """
        pairs = [] if self.initial is None else [(start_action, self.initial)]
        return pairs + list(self.steps)

    def key(self):
        """Canonical hashable encoding used by memo tables."""
        return (self.initial, self.steps)

    def check(self, pomdp):
        """Raise a ContractViolationError if an index is out of range."""
        if self.initial is not None:
            pomdp.check_observation(self.initial)
        for action, observation in self.steps:
            pomdp.check_action(action)
            pomdp.check_observation(observation)


@dataclass(frozen=True)
class Trajectory:
    """The aligned record of one sampled episode.

    ``observations[t]`` is emitted after ``actions[t]``; the pre-action
    observation, if the POMDP has one, lives in ``initial_observation``.
    """

    states: tuple
    actions: tuple
    observations: tuple
    rewards: tuple
    truncated: bool
    initial_observation: object = None

    def __post_init__(self):
        n_steps = len(self.actions)
        if not (
            len(self.states) == n_steps + 1
            and len(self.observations) == n_steps
            and len(self.rewards) == n_steps
        ):
            raise ContractViolationError(
                "Trajectory lengths are inconsistent: "
                f"{len(self.states)} states, {n_steps} actions, "
                f"{len(self.observations)} observations, "
                f"{len(self.rewards)} rewards"
            )

    def __len__(self):
        return len(self.actions)

    @property
    def terminated(self):
        """Whether a terminal, not the step cap, ended the episode."""
        return not self.truncated

    def history(self, t):
        """The history h_t the agent acts upon at step t."""
        return History(
            self.initial_observation,
            tuple(zip(self.actions[:t], self.observations[:t])),
        )

    def histories(self):
        """All prefix histories h_0 .. h_T."""
        return [self.history(t) for t in range(len(self) + 1)]

    def undiscounted_return(self):
        """The plain sum of rewards."""
        return float(sum(self.rewards))

    def to_dict(self):
        """Plain representation for json artifacts."""
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "observations": list(self.observations),
            "rewards": list(self.rewards),
            "truncated": self.truncated,
            "initial_observation": self.initial_observation,
        }


def _invalid_rows(array, tolerance=DISTRIBUTION_TOLERANCE):
    """Indices and sums of the last-axis rows that are no distribution."""
    sums = array.sum(axis=-1)
    bad = (np.abs(sums - 1.0) > tolerance) | np.any(array < 0.0, axis=-1)
    return [
        (tuple(int(i) for i in index), float(sums[tuple(index)]))
        for index in np.argwhere(bad)
    ]


def validate(pomdp, terminals=NO_TERMINALS):
    """Check the invariants of a POMDP and its terminal specification.

    Args:
        pomdp (Pomdp): The POMDP to check.
        terminals (TerminalSpec): Where its episodes end.

    Returns:
        (list of str): One diagnostic per violated invariant, each naming
            the offending table row. Empty iff all invariants hold.
    """
    diagnostics = []
    n_s, n_a = pomdp.transition.shape[:2]
    if pomdp.transition.shape != (n_s, n_a, n_s):
        diagnostics.append(
            f"T: shape {pomdp.transition.shape} is not (S, A, S)"
        )
        return diagnostics
    n_o = pomdp.n_obs
    expected = {
        "O": (pomdp.observation, (n_s, n_a, n_s, n_o)),
        "R": (pomdp.reward, (n_s, n_a)),
        "start": (pomdp.initial, (n_s,)),
    }
    if pomdp.initial_observation is not None:
        expected["O0"] = (pomdp.initial_observation, (n_s, n_o))
    for table, (array, shape) in expected.items():
        if array.shape != shape:
            diagnostics.append(
                f"{table}: shape {array.shape} does not match {shape}"
            )
    if diagnostics:
        return diagnostics

    if not 0.0 <= pomdp.gamma < 1.0:
        diagnostics.append(f"discount: gamma={pomdp.gamma} not in [0, 1)")
    if not np.all(np.isfinite(pomdp.reward)):
        diagnostics.append("R: contains non-finite rewards")
    if not is_distribution(pomdp.initial):
        diagnostics.append(
            f"start: sums to {pomdp.initial.sum():.12g} or has negative mass"
        )
    tables = [("T", pomdp.transition), ("O", pomdp.observation_table)]
    if pomdp.initial_observation is not None:
        tables.append(("O0", pomdp.initial_observation))
    full_shape = (n_s, n_a, n_s)
    for table, array in tables:
        for index, total in _invalid_rows(array):
            # axes a compact table does not resolve are printed as '*'
            coordinates = ", ".join(
                "*" if array.shape[axis] == 1 and full_shape[axis] > 1
                else str(i)
                for axis, i in enumerate(index)
            )
            diagnostics.append(
                f"{table}[{coordinates}]: sums to {total:.12g} or has "
                "negative mass"
            )

    for s in sorted(terminals.terminal_states):
        if not 0 <= s < n_s:
            diagnostics.append(f"terminal state {s} out of range")
            continue
        for a in range(n_a):
            if pomdp.transition[s, a, s] != 1.0:
                diagnostics.append(
                    f"terminal T[{s}, {a}, {s}]: self-loop probability "
                    f"{pomdp.transition[s, a, s]:.12g} is not 1"
                )
            if pomdp.reward[s, a] != 0.0:
                diagnostics.append(
                    f"terminal R[{s}, {a}]: reward {pomdp.reward[s, a]} "
                    "is not 0"
                )
    for s, a in sorted(terminals.terminal_transitions):
        if not (0 <= s < n_s and 0 <= a < n_a):
            diagnostics.append(f"terminal transition ({s}, {a}) out of range")

    if diagnostics:
        log.debug("%s: %d diagnostics", pomdp.name, len(diagnostics))
    return diagnostics


def step(pomdp, s, a, rng):
    """Simulate one step.

    Args:
        pomdp (Pomdp): The environment.
        s (int): The current state.
        a (int): The action.
        rng (numpy.random.Generator): The random stream.

    Returns:
        (int, int, float): s' ~ T(s, a), o ~ O(s, a, s') and R(s, a).

    Raises:
        ContractViolationError: If s or a is out of range.
    """
    pomdp.check_state(s)
    pomdp.check_action(a)
    next_s = sample_index(pomdp.transition[s, a], rng)
    obs = sample_index(pomdp.observation[s, a, next_s], rng)
    return next_s, obs, float(pomdp.reward[s, a])


def sample_initial(pomdp, rng):
    """Draw s_0 and, if the POMDP has one, the initial observation."""
    s0 = sample_index(pomdp.initial, rng)
    if pomdp.initial_observation is None:
        return s0, None
    return s0, sample_index(pomdp.initial_observation[s0], rng)


def _checked_policy_output(pomdp, probs, history):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (pomdp.n_actions,) or not is_distribution(
        probs, POLICY_TOLERANCE
    ):
        raise ContractViolationError(
            f"Policy returned an invalid distribution {probs!r} for "
            f"{history!r}"
        )
    return probs


def sample_episode(pomdp, terminals, policy, max_steps, rng):
    """Sample one episode.

    Args:
        pomdp (Pomdp): The environment.
        terminals (TerminalSpec): Where episodes end.
        policy (callable): Maps a History to a distribution over actions.
        max_steps (int): The step cap, at least 1.
        rng (numpy.random.Generator): The random stream of this episode.

    Returns:
        (Trajectory): Stopped at a terminal, or at the cap with the
            truncated flag set.

    Raises:
        ContractViolationError: If max_steps < 1 or the policy returns an
            invalid distribution.
    """
    if max_steps < 1:
        raise ContractViolationError(f"max_steps={max_steps} must be >= 1")
    s, initial_obs = sample_initial(pomdp, rng)
    history = History(initial_obs)
    states, actions, observations, rewards = [s], [], [], []
    truncated = s not in terminals.terminal_states
    if truncated:
        for _ in range(max_steps):
            probs = _checked_policy_output(pomdp, policy(history), history)
            a = sample_index(probs, rng)
            next_s, obs, reward = step(pomdp, s, a, rng)
            states.append(next_s)
            actions.append(a)
            observations.append(obs)
            rewards.append(reward)
            history = history.append(a, obs)
            if terminals.ends(s, a, next_s):
                truncated = False
                break
            s = next_s
    return Trajectory(
        tuple(states),
        tuple(actions),
        tuple(observations),
        tuple(rewards),
        truncated,
        initial_obs,
    )


def discounted_return(trajectory, gamma):
    """Σ_t γ^t r_t over the rewards of the trajectory.

    Args:
        trajectory (Trajectory): Any object with a ``rewards`` sequence.
        gamma (float): The discount in [0, 1].

    Returns:
        (float): The discounted return, 0 for an empty trajectory.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolationError(f"gamma={gamma} not in [0, 1]")
    rewards = np.asarray(trajectory.rewards, dtype=np.float64)
    return float(np.sum(rewards * gamma ** np.arange(len(rewards))))
