"""Exact policy gradients of softmax tabular policies.

The gradient of the loss −E[Σ_t γ^t Q(·) ∇ log π(a_t; h_t)] is summed over
the whole history tree up to the horizon, with Q either the history value
(symmetric) or the history-state value weighted by Pr(h, s) (asymmetric).
"""
import logging

import numpy as np

from .errors import ContractViolationError
from .oracle import DEFAULT_BUDGET, Belief, HistoryValues, history_layers
from .pomdp import NO_TERMINALS

log = logging.getLogger(__name__)

SYMMETRIC = "symmetric"
ASYMMETRIC = "asymmetric"
MODES = (SYMMETRIC, ASYMMETRIC)


def format_history(history):
    """Compact text of a history, e.g. ``0 | 1:0 1:1``."""
    initial = "-" if history.initial is None else str(history.initial)
    steps = " ".join(f"{a}:{o}" for a, o in history.steps)
    return f"{initial} | {steps}".rstrip()


class GradientTable:
    """Gradient entries per history, one vector over actions each."""

    def __init__(self, n_actions):
        self.n_actions = n_actions
        self.entries = {}
        self.histories = {}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, history):
        return self.entries.get(history.key(), np.zeros(self.n_actions))

    def __contains__(self, history):
        return history.key() in self.entries

    def add(self, history, gradient):
        """Accumulate a gradient vector onto θ[h]."""
        key = history.key()
        self.histories.setdefault(key, history)
        self.entries[key] = self.entries.get(key, 0.0) + np.asarray(gradient)

    def max_abs(self):
        """The largest entry magnitude."""
        if not self.entries:
            return 0.0
        return float(max(np.max(np.abs(g)) for g in self.entries.values()))

    def max_abs_difference(self, other):
        """The largest entrywise difference; missing rows count as zero."""
        difference = 0.0
        for key in set(self.entries) | set(other.entries):
            mine = self.entries.get(key, np.zeros(self.n_actions))
            theirs = other.entries.get(key, np.zeros(other.n_actions))
            difference = max(difference, float(np.max(np.abs(mine - theirs))))
        return difference

    def to_rows(self):
        """CSV rows (history, action, value) ordered by history length."""
        rows = []
        ordered = sorted(
            self.histories.items(), key=lambda item: (len(item[1]), item[0])
        )
        for key, history in ordered:
            for action, value in enumerate(self.entries[key]):
                rows.append(
                    [format_history(history), action, repr(float(value))]
                )
        return rows


def exact_policy_gradient(
    pomdp,
    policy,
    depth,
    mode=SYMMETRIC,
    terminals=NO_TERMINALS,
    budget=DEFAULT_BUDGET,
    q_override=None,
):
    """The exact gradient of the actor loss over θ[h][a].

    Args:
        pomdp (Pomdp): The POMDP.
        policy (SoftmaxPolicy): The policy, θ is its logit table.
        depth (int): Number of reward terms, also the deepest history + 1.
        mode (str): 'symmetric' uses Q(h, a), 'asymmetric' uses Q(h, s, a)
            weighted by Pr(s | h).
        terminals (TerminalSpec): Where episodes end.
        budget (int): Maximum histories per length and memo entries.
        q_override (callable): Asymmetric mode only, replaces Q(h, s, a)
            by ``q_override(history, state, action, remaining_depth)``;
            used to show that a wrong critic changes the gradient.

    Returns:
        (GradientTable): One entry per realizable history shorter than
            ``depth``.

    Raises:
        EnumerationBudgetError: If the history tree exceeds the budget.
    """
    if mode not in MODES:
        raise ContractViolationError(f"Unknown gradient mode '{mode}'")
    if depth < 1:
        raise ContractViolationError(f"depth={depth} must be >= 1")
    values = HistoryValues(pomdp, policy, terminals, budget)
    table = GradientTable(pomdp.n_actions)
    actions = range(pomdp.n_actions)
    for t, layer in history_layers(
        pomdp, policy, depth - 1, terminals, budget
    ):
        remaining = depth - t
        for history, alpha in layer:
            prob = alpha.sum()
            if prob <= 0.0:
                continue
            probs = policy(history)
            if mode == SYMMETRIC:
                belief = Belief(alpha / prob)
                weighted_q = prob * np.array(
                    [values.q(history, belief, a, remaining) for a in actions]
                )
            else:
                q_function = q_override or (
                    lambda h, s, a, d: values.qs(h, s, a, d)
                )
                weighted_q = np.zeros(pomdp.n_actions)
                for s in np.flatnonzero(alpha > 0.0):
                    weighted_q += alpha[s] * np.array(
                        [q_function(history, s, a, remaining) for a in actions]
                    )
            # Σ_a π(a) wq(a) (e_a − π)
            score = probs * weighted_q - probs * (probs @ weighted_q)
            table.add(history, -(pomdp.gamma**t) * score)
        log.debug("Gradient layer %d: %d histories", t, len(layer))
    return table
