"""Exact beliefs and value functions of tabular POMDPs.

History values are truncated after ``depth`` reward terms; the truncation
error is bounded by γ^depth · max|R| / (1 − γ). Recursions memoize on
(policy key, belief, depth) so that policies with few keys (reactive ones)
stay cheap at long horizons, while fully historyful policies enumerate the
outcome tree and are meant for short horizons.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .envs import GOOD, GoodBadSpec, build_goodbad
from .errors import (
    ContractViolationError,
    EnumerationBudgetError,
    IllDefinedValueError,
    UnreachableStateError,
    UnrealizableHistoryError,
)
from .policies import REACTIVE, ReactivePolicy
from .pomdp import NO_TERMINALS, DiscreteDistribution, History

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2_000_000
BELIEF_DECIMALS = 12


class Belief(DiscreteDistribution):
    """Pr(S | h), a distribution over states conditioned on a history."""

    def __repr__(self):
        return f"Belief({self.probabilities.tolist()})"

    def key(self):
        """Hashable rounding used by memo tables."""
        return np.round(self.probabilities, BELIEF_DECIMALS).tobytes()


def continuation_mask(pomdp, terminals=NO_TERMINALS):
    """Shape (S, A): 0 where acting ends the episode or the state is
    terminal, 1 elsewhere."""
    mask = terminals.continuation(pomdp.n_states, pomdp.n_actions)
    for s in terminals.terminal_states:
        mask[s] = 0.0
    return mask


def _predictive(pomdp, weights, action):
    """Joint Pr(s', o) of shape (S, O) from unnormalized state weights.

    Only states with nonzero weight are contracted; when O does not depend
    on the previous state the joint factors into Pr(s') O(o | a, s').
    """
    weights = np.asarray(weights, dtype=np.float64)
    support = np.flatnonzero(weights)
    rows = pomdp.transition[support, action, :]
    if pomdp.observation_table.shape[0] == 1:
        reached = weights[support] @ rows
        return reached[:, np.newaxis] * pomdp.observation[0, action]
    return np.einsum(
        "s,st,sto->to",
        weights[support],
        rows,
        pomdp.observation[support, action],
    )


def _as_vector(belief):
    if isinstance(belief, DiscreteDistribution):
        return belief.probabilities
    return np.asarray(belief, dtype=np.float64)


def belief_update(pomdp, belief, action, observation, continuation=None):
    """The Bayes step b'(s') ∝ Σ_s b(s) T(s' | s, a) O(o | s, a, s').

    Args:
        pomdp (Pomdp): The POMDP.
        belief (Belief): The current belief.
        action (int): The action taken.
        observation (int): The observation received.
        continuation (array): Optional (S, A) mask conditioning on the
            episode going on after the action.

    Raises:
        UnrealizableHistoryError: If (a, o) has zero predictive probability.
    """
    pomdp.check_action(action)
    pomdp.check_observation(observation)
    weights = _as_vector(belief)
    if continuation is not None:
        weights = weights * continuation[:, action]
    joint = _predictive(pomdp, weights, action)[:, observation]
    total = joint.sum()
    if total <= 0.0:
        raise UnrealizableHistoryError(
            f"Observation {pomdp.label('observations', observation)} has "
            f"zero probability after action "
            f"{pomdp.label('actions', action)}"
        )
    return Belief(joint / total)


def initial_belief(pomdp, initial_observation=None):
    """Pr(S_0 | o_0), or the initial distribution without o_0."""
    if initial_observation is None:
        return Belief(pomdp.initial)
    if pomdp.initial_observation is None:
        raise ContractViolationError(
            f"{pomdp.name} emits no initial observation"
        )
    pomdp.check_observation(initial_observation)
    joint = pomdp.initial * pomdp.initial_observation[:, initial_observation]
    total = joint.sum()
    if total <= 0.0:
        raise UnrealizableHistoryError(
            f"Initial observation {initial_observation} has zero probability"
        )
    return Belief(joint / total)


def belief_of_history(pomdp, history, terminals=NO_TERMINALS):
    """Pr(S | h): the fold of belief_update over the history.

    Raises:
        UnrealizableHistoryError: If the history has zero probability.
    """
    continuation = continuation_mask(pomdp, terminals)
    try:
        belief = initial_belief(pomdp, history.initial)
        for action, observation in history.steps:
            belief = belief_update(
                pomdp, belief, action, observation, continuation
            )
    except UnrealizableHistoryError as exc:
        raise UnrealizableHistoryError(
            f"{history!r} is not realizable: {exc}", history
        ) from exc
    return belief


class HistoryValues:
    """Memoized truncated recursions over histories for one policy.

    One instance shares its memo tables across calls, e.g. over all the
    histories of a gradient enumeration.
    """

    def __init__(
        self, pomdp, policy, terminals=NO_TERMINALS, budget=DEFAULT_BUDGET
    ):
        self.pomdp = pomdp
        self.policy = policy
        self.continuation = continuation_mask(pomdp, terminals)
        self.budget = budget
        self._v = {}
        self._vs = {}

    def _count(self):
        if len(self._v) + len(self._vs) >= self.budget:
            raise EnumerationBudgetError(
                f"History recursion exceeded its budget of {self.budget} "
                "memo entries"
            )

    def _probs(self, history):
        probs = np.asarray(self.policy(history), dtype=np.float64)
        if probs.shape != (self.pomdp.n_actions,):
            raise ContractViolationError(
                f"Policy returned {probs!r} for {history!r}"
            )
        return probs

    def v(self, history, belief, depth):
        """V(h) truncated after ``depth`` rewards."""
        if depth <= 0:
            return 0.0
        key = (self.policy.key(history), belief.key(), depth)
        value = self._v.get(key)
        if value is None:
            self._count()
            probs = self._probs(history)
            value = sum(
                probs[a] * self.q(history, belief, a, depth)
                for a in np.flatnonzero(probs)
            )
            self._v[key] = value
        return value

    def q(self, history, belief, action, depth):
        """Q(h, a) = R(h, a) + γ E_{o | h, a}[V(hao)]."""
        if depth <= 0:
            return 0.0
        b = belief.probabilities
        reward = float(b @ self.pomdp.reward[:, action])
        if depth == 1:
            return reward
        joint = _predictive(
            self.pomdp, b * self.continuation[:, action], action
        )
        marginal = joint.sum(axis=0)
        future = 0.0
        for o in np.flatnonzero(marginal > 0.0):
            future += marginal[o] * self.v(
                history.append(action, o),
                Belief(joint[:, o] / marginal[o]),
                depth - 1,
            )
        return reward + self.pomdp.gamma * future

    def vs(self, history, state, depth):
        """V(h, s) truncated after ``depth`` rewards."""
        if depth <= 0:
            return 0.0
        key = (self.policy.key(history), int(state), depth)
        value = self._vs.get(key)
        if value is None:
            self._count()
            probs = self._probs(history)
            value = sum(
                probs[a] * self.qs(history, state, a, depth)
                for a in np.flatnonzero(probs)
            )
            self._vs[key] = value
        return value

    def qs(self, history, state, action, depth):
        """Q(h, s, a) = R(s, a) + γ E_{s', o | s, a}[V(hao, s')]."""
        if depth <= 0:
            return 0.0
        reward = float(self.pomdp.reward[state, action])
        if depth == 1 or self.continuation[state, action] == 0.0:
            return reward
        joint = (
            self.pomdp.transition[state, action][:, np.newaxis]
            * self.pomdp.observation[state, action]
        )
        future = 0.0
        for next_s, o in np.argwhere(joint > 0.0):
            future += joint[next_s, o] * self.vs(
                history.append(action, o), next_s, depth - 1
            )
        return reward + self.pomdp.gamma * future


def _check_depth(depth):
    if depth < 0:
        raise ContractViolationError(f"Horizon depth={depth} must be >= 0")


def v_history(pomdp, policy, history, depth, terminals=NO_TERMINALS):
    """V^π(h) truncated after ``depth`` reward terms.

    Raises:
        UnrealizableHistoryError: If h has zero probability.
    """
    _check_depth(depth)
    belief = belief_of_history(pomdp, history, terminals)
    return HistoryValues(pomdp, policy, terminals).v(history, belief, depth)


def q_history(pomdp, policy, history, action, depth, terminals=NO_TERMINALS):
    """Q^π(h, a) truncated after ``depth`` reward terms."""
    _check_depth(depth)
    pomdp.check_action(action)
    belief = belief_of_history(pomdp, history, terminals)
    return HistoryValues(pomdp, policy, terminals).q(
        history, belief, action, depth
    )


def _check_pair(pomdp, history, state, terminals):
    pomdp.check_state(state)
    belief = belief_of_history(pomdp, history, terminals)
    if belief[state] <= 0.0:
        raise UnrealizableHistoryError(
            f"State {pomdp.label('states', state)} has zero probability "
            f"given {history!r}",
            history,
        )


def v_history_state(
    pomdp, policy, history, state, depth, terminals=NO_TERMINALS
):
    """V^π(h, s) truncated after ``depth`` reward terms.

    Raises:
        UnrealizableHistoryError: If (h, s) is not jointly realizable.
    """
    _check_depth(depth)
    _check_pair(pomdp, history, state, terminals)
    return HistoryValues(pomdp, policy, terminals).vs(history, state, depth)


def q_history_state(
    pomdp, policy, history, state, action, depth, terminals=NO_TERMINALS
):
    """Q^π(h, s, a) truncated after ``depth`` reward terms."""
    _check_depth(depth)
    pomdp.check_action(action)
    _check_pair(pomdp, history, state, terminals)
    return HistoryValues(pomdp, policy, terminals).qs(
        history, state, action, depth
    )


def state_action_probs(pomdp, policy):
    """Pr(a | s) = Σ_o Pr(o | s) π(a; o) of a reactive policy.

    Raises:
        IllDefinedValueError: If O depends on (s, a); the state policy is
            then not well defined.
    """
    if getattr(policy, "kind", None) != REACTIVE:
        raise ContractViolationError(
            f"State values need a reactive policy, got {policy!r}"
        )
    if not pomdp.observation_is_state_only():
        raise IllDefinedValueError(
            f"Observations of {pomdp.name} depend on the previous state or "
            "the action, reactive state values are ill-defined"
        )
    return pomdp.emission() @ policy.table


def v_state_reactive(pomdp, policy, horizon=None, terminals=NO_TERMINALS):
    """State values V^π(s) of a reactive policy.

    Without a horizon, solves V = r_π + γ P_π V exactly; with one, returns
    the values truncated after ``horizon`` reward terms.

    Returns:
        (numpy.ndarray): One value per state.
    """
    action_probs = state_action_probs(pomdp, policy)
    r_pi = np.sum(action_probs * pomdp.reward, axis=1)
    p_pi = np.einsum(
        "sa,sat->st",
        action_probs * continuation_mask(pomdp, terminals),
        pomdp.transition,
    )
    if horizon is None:
        return np.linalg.solve(
            np.eye(pomdp.n_states) - pomdp.gamma * p_pi, r_pi
        )
    _check_depth(horizon)
    values = np.zeros(pomdp.n_states)
    for _ in range(horizon):
        values = r_pi + pomdp.gamma * p_pi @ values
    return values


def _initial_layer(pomdp, policy):
    """Forward messages at t = 0: {key: (history, α(s) = Pr(h, S_0 = s))}."""
    if pomdp.initial_observation is None:
        history = History()
        return {policy.key(history): (history, pomdp.initial.copy())}
    layer = {}
    for o in range(pomdp.n_obs):
        alpha = pomdp.initial * pomdp.initial_observation[:, o]
        if alpha.sum() > 0.0:
            history = History(o)
            layer[policy.key(history)] = (history, alpha)
    return layer


def _next_layer(pomdp, policy, layer, continuation, merge, budget):
    """Advance forward messages by one action-observation step.

    With ``merge`` histories of equal policy keys share one message (a
    representative history is kept); without, every history is its own.
    """
    following = {}
    for history, alpha in layer.values():
        probs = policy(history)
        for a in np.flatnonzero(probs):
            joint = _predictive(
                pomdp, alpha * probs[a] * continuation[:, a], a
            )
            for o in np.flatnonzero(joint.sum(axis=0) > 0.0):
                child = history.append(a, o)
                key = policy.key(child) if merge else child.key()
                if key in following:
                    following[key][1][:] += joint[:, o]
                else:
                    following[key] = (child, joint[:, o].copy())
                    if len(following) > budget:
                        raise EnumerationBudgetError(
                            f"More than {budget} histories of length "
                            f"{len(child)}"
                        )
    return following


def history_distribution(
    pomdp, policy, length, terminals=NO_TERMINALS, budget=DEFAULT_BUDGET
):
    """All realizable histories of a given length under a policy.

    Histories cut short by a terminal are not extended.

    Returns:
        (list of (History, numpy.ndarray)): Each history with its forward
            message α_h(s) = Pr(h, S_t = s); Σ_s α_h(s) = Pr(h).
    """
    for t, layer in history_layers(pomdp, policy, length, terminals, budget):
        if t == length:
            return layer
    return []


def history_layers(
    pomdp, policy, length, terminals=NO_TERMINALS, budget=DEFAULT_BUDGET
):
    """Yield (t, histories of length t with forward messages) for t = 0 ..
    length, see :func:`history_distribution`."""
    continuation = continuation_mask(pomdp, terminals)
    layer = {
        history.key(): (history, alpha)
        for history, alpha in _initial_layer(pomdp, policy).values()
    }
    for t in range(length + 1):
        if t:
            layer = _next_layer(
                pomdp, policy, layer, continuation, merge=False, budget=budget
            )
        yield t, list(layer.values())


def timed_action_probs(
    pomdp, policy, t_max, terminals=NO_TERMINALS, budget=DEFAULT_BUDGET
):
    """Pr(A_t = a | S_t = s) for t = 0 .. t_max − 1.

    Computed from Σ_{h ∈ H_t} Pr(h, S_t = s) π(a; h) by forward enumeration
    of histories, merged on policy keys.

    Returns:
        (numpy.ndarray, numpy.ndarray): Conditional action probabilities of
            shape (t_max, S, A) and state marginals Pr(S_t = s) of shape
            (t_max, S).
    """
    continuation = continuation_mask(pomdp, terminals)
    n_s, n_a = pomdp.n_states, pomdp.n_actions
    conditional = np.zeros((t_max, n_s, n_a))
    marginal = np.zeros((t_max, n_s))
    layer = _initial_layer(pomdp, policy)
    for t in range(t_max):
        if t:
            layer = _next_layer(
                pomdp, policy, layer, continuation, merge=True, budget=budget
            )
        joint = np.zeros((n_s, n_a))
        for history, alpha in layer.values():
            joint += np.outer(alpha, policy(history))
        marginal[t] = joint.sum(axis=1)
        reachable = marginal[t] > 0.0
        conditional[t, reachable] = (
            joint[reachable] / marginal[t, reachable, np.newaxis]
        )
        log.debug("Timed layer %d holds %d policy keys", t, len(layer))
    return conditional, marginal


def v_timed_state(
    pomdp,
    policy,
    t,
    state,
    depth,
    terminals=NO_TERMINALS,
    budget=DEFAULT_BUDGET,
):
    """The timed value V_t(s) truncated after ``depth`` reward terms.

    V_u(s) = Σ_a Pr(A_u = a | S_u = s) [R(s, a) + γ Σ_s' T(s' | s, a)
    V_{u+1}(s')] for u = t .. t + depth − 1.

    Raises:
        UnreachableStateError: If Pr(S_t = s) = 0.
    """
    _check_depth(depth)
    pomdp.check_state(state)
    conditional, marginal = timed_action_probs(
        pomdp, policy, t + max(depth, 1), terminals, budget
    )
    if marginal[t, state] <= 0.0:
        raise UnreachableStateError(
            f"State {pomdp.label('states', state)} is unreachable at t={t}"
        )
    continuation = continuation_mask(pomdp, terminals)
    values = np.zeros(pomdp.n_states)
    for u in range(t + depth - 1, t - 1, -1):
        q = pomdp.reward + pomdp.gamma * continuation * (
            pomdp.transition @ values
        )
        values = np.sum(conditional[u] * q, axis=1)
    return float(values[state])


@dataclass(frozen=True)
class BiasReport:
    """Exact values of one history compared across critic targets.

    Attributes:
        v_h (float): V^π(h).
        e_vs (float): E_{s|h}[V^π(s)] with reactive state values, None when
            they are ill-defined or the policy is not reactive.
        e_vhs (float): E_{s|h}[V^π(h, s)].
        gap_state (float): |v_h − e_vs|, None with e_vs.
        gap_hs (float): |v_h − e_vhs|.
    """

    v_h: float
    e_vs: object
    e_vhs: float
    gap_state: object
    gap_hs: float

    FIELDS = ("v_h", "e_vs", "e_vhs", "gap_state", "gap_hs")

    def to_row(self):
        """CSV cells, unavailable fields are empty."""
        return [
            ""
            if getattr(self, name) is None
            else repr(float(getattr(self, name)))
            for name in self.FIELDS
        ]

    def to_dict(self):
        """Plain representation for json artifacts."""
        return {name: getattr(self, name) for name in self.FIELDS}


def bias_report(pomdp, policy, history, depth, terminals=NO_TERMINALS):
    """Compare V(h) with the state and history-state critic targets.

    All three values share the horizon ``depth``.
    """
    _check_depth(depth)
    belief = belief_of_history(pomdp, history, terminals)
    values = HistoryValues(pomdp, policy, terminals)
    v_h = values.v(history, belief, depth)
    b = belief.probabilities
    e_vhs = float(
        sum(
            b[s] * values.vs(history, s, depth)
            for s in np.flatnonzero(b > 0.0)
        )
    )
    try:
        state_values = v_state_reactive(pomdp, policy, depth, terminals)
    except (IllDefinedValueError, ContractViolationError) as exc:
        log.debug("Reactive state values unavailable: %s", exc)
        e_vs = gap_state = None
    else:
        e_vs = float(b @ state_values)
        gap_state = abs(v_h - e_vs)
    return BiasReport(v_h, e_vs, e_vhs, gap_state, abs(v_h - e_vhs))


def goodbad_contradiction(gamma):
    """Two incompatible evaluations of E_{s|h}[V(s)] on good/bad at h = [g].

    ``lhs`` weighs the reactive state values with the belief after [g];
    ``rhs`` bootstraps one step first, 1 + γ E_o[E_{s|hao}[V(s)]]. If the
    state values were unbiased for the history value, both would agree;
    they differ by 1/6 for every γ.

    Returns:
        (float, float, float): lhs, rhs and gap = rhs − lhs.
    """
    if not 0.0 <= gamma < 1.0:
        raise ContractViolationError(f"gamma={gamma} not in [0, 1)")
    pomdp, _ = build_goodbad(GoodBadSpec(gamma))
    policy = ReactivePolicy(np.eye(2))
    state_values = v_state_reactive(pomdp, policy)
    history = History(GOOD)
    belief = belief_of_history(pomdp, history).probabilities
    lhs = float(belief @ state_values)
    rhs = 0.0
    for action, weight in enumerate(policy(history)):
        if weight == 0.0:
            continue
        joint = _predictive(pomdp, belief, action)
        bootstrap = sum(
            joint[:, o] @ state_values for o in range(pomdp.n_obs)
        )
        rhs += weight * (
            belief @ pomdp.reward[:, action] + gamma * bootstrap
        )
    return lhs, float(rhs), float(rhs - lhs)
