import numpy as np
import pytest

from asymlab.envs import (
    BAD,
    EAST,
    GOOD,
    HEAVEN_LEFT,
    LEFT,
    NORTH,
    QUERY,
    RIGHT,
    SOUTH,
    UP,
    WEST,
    HeavenHellLayout,
    ShoppingSpec,
    build_shopping,
    heavenhell_fork_probes,
)
from asymlab.errors import (
    ContractViolationError,
    EnumerationBudgetError,
    IllDefinedValueError,
    UnreachableStateError,
    UnrealizableHistoryError,
)
from asymlab.oracle import (
    Belief,
    BiasReport,
    HistoryValues,
    belief_of_history,
    belief_update,
    bias_report,
    goodbad_contradiction,
    history_distribution,
    history_layers,
    initial_belief,
    q_history,
    q_history_state,
    state_action_probs,
    timed_action_probs,
    v_history,
    v_history_state,
    v_state_reactive,
    v_timed_state,
)
from asymlab.policies import (
    HistoryPolicy,
    RandomHistoryPolicy,
    TabularPolicy,
    constant_policy,
    uniform_policy,
)
from asymlab.pomdp import NO_TERMINALS, History, sample_episode
from asymlab.utilities import make_rng


def _random_history(pomdp, seed, length):
    trajectory = sample_episode(
        pomdp,
        NO_TERMINALS,
        uniform_policy(pomdp.n_obs, pomdp.n_actions),
        length,
        make_rng(seed),
    )
    return trajectory.history(length)


@pytest.mark.parametrize(
    "history, expected",
    [
        (History(GOOD), [2 / 3, 1 / 3]),
        (History(GOOD, ((GOOD, GOOD),)), [4 / 5, 1 / 5]),
        (History(GOOD, ((GOOD, BAD),)), [0.0, 1.0]),
        (History(BAD), [0.0, 1.0]),
    ],
)
def test_goodbad_beliefs(goodbad, history, expected):
    pomdp, terminals = goodbad
    belief = belief_of_history(pomdp, history, terminals)
    assert belief.probabilities == pytest.approx(expected)
    assert belief.is_valid


def test_unrealizable_observation(goodbad, heavenhell3):
    pomdp, _ = goodbad
    with pytest.raises(UnrealizableHistoryError):
        belief_update(pomdp, Belief([1.0, 0.0]), GOOD, BAD)
    # the priest is never seen from the start cell
    pomdp, terminals = heavenhell3
    history = History(HeavenHellLayout(3).priest)
    with pytest.raises(UnrealizableHistoryError) as error:
        belief_of_history(pomdp, history, terminals)
    assert error.value.history == history


def test_initial_belief_needs_an_initial_observation(make_random_pomdp):
    blind = make_random_pomdp(0, initial_observation=False)
    assert initial_belief(blind) == Belief(blind.initial)
    with pytest.raises(ContractViolationError):
        initial_belief(blind, 0)


def test_belief_keys_round_away_noise():
    assert Belief([0.5, 0.5]).key() == Belief([0.5 + 1e-15, 0.5]).key()
    assert Belief([0.5, 0.5]).key() != Belief([0.4, 0.6]).key()


@pytest.mark.parametrize("state_only", [False, True])
def test_belief_update_is_bayes_rule(make_random_pomdp, state_only):
    pomdp = make_random_pomdp(
        4, n_states=5, n_actions=3, n_obs=3, state_only_observations=state_only
    )
    belief = Belief([0.4, 0.0, 0.35, 0.25, 0.0])
    for action in range(pomdp.n_actions):
        for observation in range(pomdp.n_obs):
            expected = np.zeros(pomdp.n_states)
            for s in range(pomdp.n_states):
                for next_s in range(pomdp.n_states):
                    expected[next_s] += (
                        belief.probabilities[s]
                        * pomdp.transition[s, action, next_s]
                        * pomdp.observation[s, action, next_s, observation]
                    )
            updated = belief_update(pomdp, belief, action, observation)
            np.testing.assert_allclose(
                updated.probabilities, expected / expected.sum(), atol=1e-12
            )


def test_goodbad_history_values(goodbad_half, last_observation_policy):
    pomdp = goodbad_half
    history = History(GOOD)
    assert v_history(
        pomdp, last_observation_policy, history, 2
    ) == pytest.approx(17 / 12)
    assert q_history(
        pomdp, last_observation_policy, history, GOOD, 1
    ) == pytest.approx(1.0)
    assert q_history(
        pomdp, last_observation_policy, history, BAD, 1
    ) == pytest.approx(0.0)
    assert v_history_state(
        pomdp, last_observation_policy, history, GOOD, 2
    ) == pytest.approx(1.5)
    assert v_history_state(
        pomdp, last_observation_policy, history, BAD, 2
    ) == pytest.approx(1.25)
    assert v_history(pomdp, last_observation_policy, history, 0) == 0.0


def test_history_state_needs_a_realizable_pair(goodbad):
    pomdp, _ = goodbad
    policy = uniform_policy(2, 2)
    with pytest.raises(UnrealizableHistoryError):
        v_history_state(pomdp, policy, History(BAD), GOOD, 3)
    with pytest.raises(UnrealizableHistoryError):
        q_history_state(pomdp, policy, History(BAD), GOOD, GOOD, 3)


def test_negative_depth(goodbad):
    pomdp, _ = goodbad
    with pytest.raises(ContractViolationError):
        v_history(pomdp, uniform_policy(2, 2), History(GOOD), -1)


def test_values_satisfy_their_recursions(make_random_pomdp):
    for seed in range(3):
        pomdp = make_random_pomdp(seed, n_states=3, n_actions=2, n_obs=3)
        policy = RandomHistoryPolicy(2, seed=seed)
        history = _random_history(pomdp, seed, 2)
        probs = policy(history)
        depth = 4
        v = v_history(pomdp, policy, history, depth)
        assert v == pytest.approx(
            sum(
                probs[a] * q_history(pomdp, policy, history, a, depth)
                for a in range(2)
            )
        )
        belief = belief_of_history(pomdp, history)
        state = int(np.argmax(belief.probabilities))
        vs = v_history_state(pomdp, policy, history, state, depth)
        assert vs == pytest.approx(
            sum(
                probs[a]
                * q_history_state(pomdp, policy, history, state, a, depth)
                for a in range(2)
            )
        )


def test_history_value_is_the_expected_history_state_value(
    make_random_pomdp,
):
    for seed in range(5):
        pomdp = make_random_pomdp(seed, n_states=3, n_actions=2, n_obs=2)
        policy = RandomHistoryPolicy(2, seed=seed)
        history = _random_history(pomdp, seed, 3)
        report = bias_report(pomdp, policy, history, 4)
        assert report.gap_hs == pytest.approx(0.0, abs=1e-10)
        assert report.e_vs is None
        assert report.gap_state is None


def test_state_values_are_biased_on_goodbad(goodbad, last_observation_policy):
    pomdp, _ = goodbad
    report = bias_report(pomdp, last_observation_policy, History(GOOD), 150)
    assert report.gap_hs == pytest.approx(0.0, abs=1e-8)
    assert report.e_vs == pytest.approx(25 / 3, abs=1e-5)
    assert report.gap_state > 0.1
    row = report.to_row()
    assert len(row) == len(BiasReport.FIELDS)
    assert float(row[1]) == report.e_vs


def test_bias_report_rows_leave_missing_values_empty():
    report = BiasReport(1.0, None, 1.0, None, 0.0)
    assert report.to_row() == ["1.0", "", "1.0", "", "0.0"]
    assert report.to_dict()["e_vs"] is None


def test_reactive_state_values(goodbad, last_observation_policy):
    pomdp, _ = goodbad
    values = v_state_reactive(pomdp, last_observation_policy)
    assert values == pytest.approx([10.0, 5.0])
    truncated = v_state_reactive(pomdp, last_observation_policy, horizon=300)
    assert truncated == pytest.approx(values, abs=1e-9)
    assert v_state_reactive(
        pomdp, last_observation_policy, horizon=1
    ) == pytest.approx([1.0, 0.5])


def test_state_action_probs(goodbad, last_observation_policy):
    pomdp, _ = goodbad
    probs = state_action_probs(pomdp, last_observation_policy)
    assert probs.tolist() == [[1.0, 0.0], [0.5, 0.5]]


def test_state_values_need_state_only_observations(make_random_pomdp):
    pomdp = make_random_pomdp(1)
    with pytest.raises(IllDefinedValueError):
        state_action_probs(pomdp, uniform_policy(2, 2))
    with pytest.raises(ContractViolationError):
        state_action_probs(pomdp, HistoryPolicy(2))


@pytest.mark.parametrize("gamma", [0.0, 0.5, 0.9, 0.99])
def test_goodbad_contradiction(gamma):
    lhs, rhs, gap = goodbad_contradiction(gamma)
    assert gap == pytest.approx(1 / 6)
    assert rhs - lhs == pytest.approx(gap)


def test_goodbad_contradiction_values():
    assert goodbad_contradiction(0.9)[:2] == pytest.approx((25 / 3, 8.5))
    assert goodbad_contradiction(0.0)[:2] == pytest.approx((5 / 6, 1.0))
    with pytest.raises(ContractViolationError):
        goodbad_contradiction(1.0)


def test_terminals_stop_the_recursion(heavenhell3):
    layout = HeavenHellLayout(3)
    pomdp, terminals = heavenhell3
    go_west = constant_policy(pomdp.n_obs, [0.0, 0.0, 0.0, 1.0])
    probes = {name: (h, s) for name, h, s in heavenhell_fork_probes(3)}
    history, state = probes["heaven-left-priest"]
    assert layout.decode(state)[1] == layout.fork
    value = v_history(pomdp, go_west, history, 10, terminals)
    assert value == pytest.approx(0.99**2)
    history, state = probes["heaven-right-no-priest"]
    assert v_history(pomdp, go_west, history, 10, terminals) == (
        pytest.approx(0.0)
    )
    assert v_history_state(
        pomdp, go_west, history, state, 10, terminals
    ) == pytest.approx(-(0.99**2))


def test_history_distribution_sums_to_one(goodbad):
    pomdp, terminals = goodbad
    histories = history_distribution(pomdp, uniform_policy(2, 2), 2)
    assert len(histories) == 32
    assert sum(alpha.sum() for _, alpha in histories) == pytest.approx(1.0)
    assert all(len(history) == 2 for history, _ in histories)
    lengths = [t for t, _ in history_layers(pomdp, uniform_policy(2, 2), 2)]
    assert lengths == [0, 1, 2]


def test_history_distribution_loses_terminated_mass(heavenhell3):
    pomdp, terminals = heavenhell3
    west = constant_policy(pomdp.n_obs, [0.5, 0.0, 0.0, 0.5])
    histories = history_distribution(pomdp, west, 7, terminals)
    total = sum(alpha.sum() for _, alpha in histories)
    assert 0.0 < total < 1.0


def test_enumeration_budgets(goodbad):
    pomdp, _ = goodbad
    policy = RandomHistoryPolicy(2, seed=0)
    with pytest.raises(EnumerationBudgetError):
        history_distribution(pomdp, policy, 3, budget=5)
    values = HistoryValues(pomdp, policy, budget=3)
    belief = belief_of_history(pomdp, History(GOOD))
    with pytest.raises(EnumerationBudgetError):
        values.v(History(GOOD), belief, 5)


def test_timed_action_probs(goodbad, last_observation_policy):
    pomdp, _ = goodbad
    conditional, marginal = timed_action_probs(
        pomdp, last_observation_policy, 4
    )
    assert conditional.shape == (4, 2, 2)
    assert marginal == pytest.approx(np.full((4, 2), 0.5))
    for t in range(4):
        np.testing.assert_allclose(conditional[t], [[1.0, 0.0], [0.5, 0.5]])


def test_timed_values_match_reactive_state_values(
    goodbad, last_observation_policy
):
    pomdp, _ = goodbad
    expected = v_state_reactive(pomdp, last_observation_policy, horizon=40)
    for state in (GOOD, BAD):
        value = v_timed_state(
            pomdp, last_observation_policy, 2, state, 40
        )
        assert value == pytest.approx(expected[state])


def test_one_step_timed_value_is_the_history_state_value(make_random_pomdp):
    for seed in range(3):
        pomdp = make_random_pomdp(seed, initial_observation=False)
        policy = RandomHistoryPolicy(2, seed=seed)
        for state in range(pomdp.n_states):
            timed = v_timed_state(pomdp, policy, 0, state, 1)
            exact = v_history_state(pomdp, policy, History(), state, 1)
            assert timed == pytest.approx(exact)


def test_unreachable_timed_state(heavenhell3):
    pomdp, terminals = heavenhell3
    layout = HeavenHellLayout(3)
    fork = layout.state(0, layout.fork)
    with pytest.raises(UnreachableStateError):
        v_timed_state(
            pomdp, uniform_policy(pomdp.n_obs, 4), 0, fork, 1, terminals
        )


class _ScriptedHeavenHellPolicy(TabularPolicy):
    """Deterministic HeavenHell play keyed on the first action.

    Histories opening with NORTH fetch the priest's hint and walk to heaven,
    any other opening walks straight to the left exit.
    """

    def __init__(self, layout):
        super().__init__(4)
        self.layout = layout

    def probs(self, history):
        layout = self.layout
        seen = [o for _, o in history.steps if o >= layout.priest]
        position = min(history.last_observation, layout.priest)
        x, y = layout.cells[position]
        seeker = bool(history.steps) and history.steps[0][0] == NORTH
        if seen:
            side = seen[0] - layout.priest
            if y == 0:
                action = WEST if side == HEAVEN_LEFT else EAST
            elif x > 0:
                action = WEST
            else:
                action = NORTH
        elif seeker:
            action = EAST if y == -layout.n - 1 else SOUTH
        else:
            action = NORTH if y < 0 else WEST
        return np.eye(4)[action]


def test_equal_beliefs_can_hide_different_values(heavenhell3):
    pomdp, terminals = heavenhell3
    layout = HeavenHellLayout(3)
    seeker, _ = layout.walk(HEAVEN_LEFT, [NORTH, SOUTH])
    gambler, _ = layout.walk(HEAVEN_LEFT, [EAST])
    assert seeker != gambler
    assert seeker.last_observation == gambler.last_observation == layout.start
    seeker_belief = belief_of_history(pomdp, seeker, terminals)
    gambler_belief = belief_of_history(pomdp, gambler, terminals)
    assert seeker_belief == gambler_belief

    policy = _ScriptedHeavenHellPolicy(layout)
    seeker_value = v_history(pomdp, policy, seeker, 20, terminals)
    gambler_value = v_history(pomdp, policy, gambler, 20, terminals)
    # south, three steps east, back and up to the fork, three steps to heaven
    assert seeker_value == pytest.approx(0.99**13)
    assert gambler_value == pytest.approx(0.0, abs=1e-12)
    state_values = v_state_reactive(
        pomdp, uniform_policy(pomdp.n_obs, 4), terminals=terminals
    )
    assert (seeker_belief.probabilities @ state_values) == (
        gambler_belief.probabilities @ state_values
    )


@pytest.mark.parametrize("n", [5, 6])
def test_shopping_belief_is_settled_by_the_first_query(n):
    pomdp, terminals = build_shopping(ShoppingSpec(n))
    n_cells = n * n
    item = n_cells - 2

    def marginals(history):
        belief = belief_of_history(pomdp, history, terminals).probabilities
        table = belief.reshape(n_cells, n_cells)
        return table.sum(axis=1), table.sum(axis=0)

    history = History(0)
    for action, cell in ((RIGHT, 1), (UP, 1 + n), (UP, 1 + 2 * n)):
        history = history.append(action, cell)
        agent, item_cells = marginals(history)
        assert agent[cell] == pytest.approx(1.0)
        np.testing.assert_allclose(item_cells, np.full(n_cells, 1 / n_cells))
    for action, cell in (
        (QUERY, n_cells + item),
        (LEFT, 2 * n),
        (QUERY, n_cells + item),
    ):
        history = history.append(action, cell)
        _, item_cells = marginals(history)
        assert item_cells[item] == pytest.approx(1.0)
        assert np.count_nonzero(item_cells) == 1
