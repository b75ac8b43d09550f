"""Tabular policies evaluated by the exact oracle.

A policy maps a History to a distribution over actions. Besides the
mapping, every policy exposes ``key(history)``: two histories with equal
keys are acted upon identically now and after any common continuation.
The oracle memoizes on these keys, which is what keeps reactive policies
tractable at long horizons.
"""
import logging

import numpy as np

from .errors import ContractViolationError
from .pomdp import POLICY_TOLERANCE, is_distribution

log = logging.getLogger(__name__)

REACTIVE = "reactive"
HISTORYFUL = "historyful"
SOFTMAX = "softmax"


def softmax(logits):
    """Numerically stable softmax of a vector."""
    shifted = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(shifted - shifted.max())
    return shifted / shifted.sum()


def _history_seed(seed, key):
    """An integer sequence identifying (seed, history key) for SeedSequence."""
    initial, steps = key
    words = [seed, 0 if initial is None else initial + 1]
    for action, observation in steps:
        words.extend((action, observation))
    return words


class TabularPolicy:
    """Base class of the tabular policies."""

    kind = None

    def __init__(self, n_actions):
        self.n_actions = n_actions

    def __call__(self, history):
        return self.probs(history)

    def __repr__(self):
        return f"{self.__class__.__name__}(n_actions={self.n_actions})"

    def probs(self, history):
        """π(· ; h) as a vector over actions."""
        raise NotImplementedError

    def key(self, history):
        """The canonical encoding the policy's behaviour depends on."""
        return history.key()

    def _checked(self, row, what):
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.n_actions,) or not is_distribution(
            row, POLICY_TOLERANCE
        ):
            raise ContractViolationError(
                f"{self.__class__.__name__}: invalid row for {what}: {row!r}"
            )
        return row


class ReactivePolicy(TabularPolicy):
    """π(a; o_h): the action distribution depends on the last observation.

    Args:
        table (array): Shape (O, A), one distribution per observation.
        empty (array): The distribution used on the empty history of a
            POMDP without initial observation, uniform if None.
    """

    kind = REACTIVE

    def __init__(self, table, empty=None):
        table = np.asarray(table, dtype=np.float64)
        super().__init__(table.shape[1])
        self.table = np.array(
            [
                self._checked(row, f"observation {o}")
                for o, row in enumerate(table)
            ]
        )
        self.empty = (
            np.full(self.n_actions, 1.0 / self.n_actions)
            if empty is None
            else self._checked(empty, "the empty history")
        )

    def probs(self, history):
        observation = history.last_observation
        if observation is None:
            return self.empty
        return self.table[observation]

    def key(self, history):
        return history.last_observation

    @property
    def n_obs(self):
        """Number of observations the table covers."""
        return self.table.shape[0]


def constant_policy(n_obs, probs):
    """A reactive policy ignoring its observation."""
    probs = np.asarray(probs, dtype=np.float64)
    return ReactivePolicy(np.tile(probs, (n_obs, 1)), empty=probs)


def uniform_policy(n_obs, n_actions):
    """The reactive policy drawing actions uniformly."""
    return constant_policy(n_obs, np.full(n_actions, 1.0 / n_actions))


class HistoryPolicy(TabularPolicy):
    """π(a; h) read from a map over histories.

    Args:
        n_actions (int): Number of actions.
        rows (dict): History (or its key) to action distribution.
        default (array): Distribution for histories not in ``rows``,
            uniform if None.
    """

    kind = HISTORYFUL

    def __init__(self, n_actions, rows=None, default=None):
        super().__init__(n_actions)
        self.rows = {}
        for history, row in (rows or {}).items():
            key = history if isinstance(history, tuple) else history.key()
            self.rows[key] = self._checked(row, history)
        self.default = (
            np.full(n_actions, 1.0 / n_actions)
            if default is None
            else self._checked(default, "the default row")
        )

    def probs(self, history):
        return self.rows.get(history.key(), self.default)


class RandomHistoryPolicy(TabularPolicy):
    """A historyful policy with Dirichlet rows drawn lazily per history.

    The row of a history is a deterministic function of (seed, history), so
    the policy is a fixed, fully history-dependent table of unbounded size.
    """

    kind = HISTORYFUL

    def __init__(self, n_actions, seed, concentration=1.0):
        super().__init__(n_actions)
        self.seed = seed
        self.concentration = concentration
        self._rows = {}

    def probs(self, history):
        key = history.key()
        row = self._rows.get(key)
        if row is None:
            rng = np.random.default_rng(_history_seed(self.seed, key))
            row = rng.dirichlet(np.full(self.n_actions, self.concentration))
            self._rows[key] = row
        return row


class SoftmaxPolicy(TabularPolicy):
    """π(a; h) ∝ exp θ[h][a] over a parameter table keyed by history.

    Histories missing from ``theta`` get zero logits, or logits drawn from
    N(0, scale²) keyed by (seed, history) when a seed is given.
    """

    kind = SOFTMAX

    def __init__(self, n_actions, theta=None, seed=None, scale=1.0):
        super().__init__(n_actions)
        self.theta = {
            (k if isinstance(k, tuple) else k.key()): np.asarray(
                v, dtype=np.float64
            )
            for k, v in (theta or {}).items()
        }
        self.seed = seed
        self.scale = scale

    def logits(self, history):
        """θ[h], drawn lazily for unseen histories."""
        key = history.key()
        logits = self.theta.get(key)
        if logits is None:
            if self.seed is None:
                logits = np.zeros(self.n_actions)
            else:
                rng = np.random.default_rng(_history_seed(self.seed, key))
                logits = rng.normal(0.0, self.scale, size=self.n_actions)
            self.theta[key] = logits
        return logits

    def probs(self, history):
        return softmax(self.logits(history))

    def grad_log_probs(self, history, action):
        """∇_θ[h] log π(action; h) = e_action − π(· ; h)."""
        grad = -self.probs(history)
        grad[action] += 1.0
        return grad


class FunctionPolicy(TabularPolicy):
    """Wrap any callable history → distribution (e.g. a trained actor)."""

    kind = HISTORYFUL

    def __init__(self, n_actions, func):
        super().__init__(n_actions)
        self.func = func

    def probs(self, history):
        return self._checked(self.func(history), history)
