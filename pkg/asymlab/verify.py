"""Verification commands comparing exact values and gradients.

Each command returns a :class:`Report` with a pass/fail verdict, the numbers
it checked and, on failure, the offending entries. ``run`` dispatches by
command name; ``all`` runs every command.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .agent import (
    ALL_KINDS,
    Actor,
    Critic,
    HistoryEncoder,
    NetworkSizes,
)
from .envs import (
    BAD,
    GOOD,
    GoodBadSpec,
    build_goodbad,
    build_mdp_in_disguise,
    random_pomdp,
)
from .gradients import ASYMMETRIC, SYMMETRIC, exact_policy_gradient
from .nn import Embedding, GruCell, Linear, MlpHead, gradcheck
from .oracle import (
    Belief,
    HistoryValues,
    belief_of_history,
    bias_report,
    goodbad_contradiction,
    history_layers,
    v_state_reactive,
    v_timed_state,
)
from .policies import RandomHistoryPolicy, ReactivePolicy, SoftmaxPolicy
from .pomdp import History

log = logging.getLogger(__name__)

COMMANDS = (
    "goodbad",
    "theorem2",
    "theorem3",
    "theorem4",
    "theorem5",
    "timed",
    "gradcheck",
)
DEFAULT_SEED = 0
THEOREM4_MIN_DEPTH = 2


@dataclass
class Report:
    """The outcome of one verification command.

    Attributes:
        command (str): The command name.
        passed (bool): The verdict.
        numbers (dict): The values that were checked.
        failures (list of str): Offending entries, empty on success.
    """

    command: str
    passed: bool = True
    numbers: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def check(self, condition, failure):
        """Record a failure unless ``condition`` holds."""
        if not condition:
            self.passed = False
            self.failures.append(failure)
        return condition

    def to_dict(self):
        """Plain representation for json output."""
        return {
            "command": self.command,
            "status": "PASS" if self.passed else "FAIL",
            "numbers": self.numbers,
            "failures": self.failures,
        }

    def __str__(self):
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        for name, value in self.numbers.items():
            lines.append(f"  {name} = {value}")
        for failure in self.failures:
            lines.append(f"  ! {failure}")
        return "\n".join(lines)


def _last_observation_policy():
    return ReactivePolicy(np.eye(2))


def verify_goodbad(gamma=0.9, n_gammas=100, seed=DEFAULT_SEED):
    """The good/bad numbers and the γ-independent gap of 1/6."""
    report = Report("goodbad")
    pomdp, _ = build_goodbad(GoodBadSpec(gamma))
    policy = _last_observation_policy()
    history = History(GOOD)
    belief = belief_of_history(pomdp, history).probabilities
    emission = belief @ pomdp.transition[:, GOOD] @ pomdp.observation[0, 0]
    values = v_state_reactive(pomdp, policy)
    lhs, rhs, gap = goodbad_contradiction(gamma)
    report.numbers.update(
        belief=belief.tolist(),
        emission=emission.tolist(),
        v_good=float(values[GOOD]),
        v_bad=float(values[BAD]),
        lhs=lhs,
        rhs=rhs,
        gap=gap,
    )
    expected = {
        "belief": ([2 / 3, 1 / 3], belief),
        "emission": ([5 / 6, 1 / 6], emission),
        "v_good": (1 / (1 - gamma), values[GOOD]),
        "v_bad": (1 / (2 * (1 - gamma)), values[BAD]),
        "lhs": (5 / (6 * (1 - gamma)), lhs),
        "rhs": ((6 - gamma) / (6 * (1 - gamma)), rhs),
        "gap": (1 / 6, gap),
    }
    for name, (want, got) in expected.items():
        report.check(
            np.allclose(got, want, rtol=0.0, atol=1e-9),
            f"{name}: expected {want}, got {np.asarray(got).tolist()}",
        )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sampled in rng.uniform(0.0, 0.99, size=n_gammas):
        worst = max(worst, abs(goodbad_contradiction(sampled)[2] - 1 / 6))
    report.numbers["max_gap_deviation"] = worst
    report.check(worst <= 1e-12, f"gap deviates from 1/6 by {worst:.3g}")
    return report


def verify_theorem2(gammas=(0.0, 0.5, 0.9), depth=60):
    """State values are biased for the history value on good/bad."""
    report = Report("theorem2")
    policy = _last_observation_policy()
    for gamma in gammas:
        pomdp, _ = build_goodbad(GoodBadSpec(gamma))
        bias = bias_report(pomdp, policy, History(GOOD), depth)
        report.numbers[f"gamma={gamma}"] = bias.to_dict()
        report.check(
            bias.gap_hs <= 1e-6,
            f"gamma={gamma}: history-state gap {bias.gap_hs:.3g} > 1e-6",
        )
        threshold = 0.05 if gamma == 0.9 else 0.0
        report.check(
            bias.gap_state > threshold,
            f"gamma={gamma}: state gap {bias.gap_state:.3g} <= {threshold}",
        )
    return report


def _realizable_histories(pomdp, policy, length):
    for _, layer in history_layers(pomdp, policy, length):
        for history, alpha in layer:
            if alpha.sum() > 0.0:
                yield history, Belief(alpha / alpha.sum())


def verify_theorem3(n_pomdps=5, length=3, depth=10, seed=DEFAULT_SEED):
    """State values are unbiased under full observability."""
    report = Report("theorem3")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_pomdps):
        base = random_pomdp(rng, n_states=3, n_actions=2, n_obs=2)
        pomdp = build_mdp_in_disguise(base)
        policy = ReactivePolicy(
            rng.dirichlet(np.ones(pomdp.n_actions), size=pomdp.n_obs)
        )
        for history, _ in _realizable_histories(pomdp, policy, length):
            gap = bias_report(pomdp, policy, history, depth).gap_state
            worst = max(worst, gap)
            report.check(
                gap <= 1e-8,
                f"pomdp {i}, history {history!r}: state gap {gap:.3g}",
            )
    report.numbers["max_state_gap"] = worst
    return report


def verify_theorem4(n_pomdps=100, length=3, total=4, seed=DEFAULT_SEED):
    """History-state values are unbiased for history values.

    A history of length L is evaluated at the horizon max(total − L, 2).
    """
    report = Report("theorem4")
    rng = np.random.default_rng(seed)
    worst, checked, depths = 0.0, 0, set()
    for i in range(n_pomdps):
        pomdp = random_pomdp(
            rng,
            n_states=int(rng.integers(2, 5)),
            n_actions=int(rng.integers(2, 4)),
            n_obs=int(rng.integers(2, 4)),
        )
        policy = RandomHistoryPolicy(
            pomdp.n_actions, seed=int(rng.integers(2**31))
        )
        values = HistoryValues(pomdp, policy)
        for history, belief in _realizable_histories(pomdp, policy, length):
            depth = max(total - len(history), THEOREM4_MIN_DEPTH)
            depths.add(depth)
            v_h = values.v(history, belief, depth)
            b = belief.probabilities
            e_vhs = sum(
                b[s] * values.vs(history, s, depth)
                for s in np.flatnonzero(b > 0.0)
            )
            gap = abs(v_h - e_vhs)
            worst = max(worst, gap)
            checked += 1
            report.check(
                gap <= 1e-8, f"pomdp {i}, history {history!r}: gap {gap:.3g}"
            )
    report.numbers.update(
        max_gap=worst, histories=checked, min_depth=min(depths, default=0)
    )
    return report


def corrupted_q(pomdp, policy, offset=1.0):
    """Q(h, s, a) with ``offset`` added on the first action after h_0.

    Plants a defect in one gradient path of the asymmetric estimator.
    """
    values = HistoryValues(pomdp, policy)

    def q_function(history, state, action, depth):
        value = values.qs(history, state, action, depth)
        if len(history) == 1 and action == 0:
            value += offset
        return value

    return q_function


def _worst_entry(left, right):
    worst_key, worst = None, -1.0
    for key in set(left.entries) | set(right.entries):
        difference = np.max(
            np.abs(left.entries.get(key, 0.0) - right.entries.get(key, 0.0))
        )
        if difference > worst:
            worst_key, worst = key, float(difference)
    history = left.histories.get(worst_key) or right.histories.get(worst_key)
    return history, worst


def verify_theorem5(
    n_pomdps=20, depth=3, seed=DEFAULT_SEED, corrupt=False
):
    """Symmetric and asymmetric exact policy gradients agree.

    Args:
        corrupt (bool): Plant a defect in the asymmetric Q (test hook); the
            verification must then fail.
    """
    report = Report("theorem5")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_pomdps):
        pomdp = random_pomdp(
            rng,
            n_states=int(rng.integers(2, 5)),
            n_actions=int(rng.integers(2, 4)),
            n_obs=int(rng.integers(2, 4)),
        )
        policy = SoftmaxPolicy(pomdp.n_actions, seed=int(rng.integers(2**31)))
        symmetric = exact_policy_gradient(pomdp, policy, depth, SYMMETRIC)
        asymmetric = exact_policy_gradient(
            pomdp,
            policy,
            depth,
            ASYMMETRIC,
            q_override=corrupted_q(pomdp, policy) if corrupt else None,
        )
        history, difference = _worst_entry(symmetric, asymmetric)
        worst = max(worst, difference)
        report.check(
            difference <= 1e-8,
            f"pomdp {i}: theta[{history!r}] differs by {difference:.3g}",
        )
    report.numbers["max_difference"] = worst
    return report


def trajectory_tree_timed_value(pomdp, policy, t, state, depth):
    """V_t(s) from Pr(A_u | S_u) counted over every trajectory of the tree.

    Enumerates (s_0, o_0, a_0, s_1, o_1, ..) without any merging and is
    exponential in t + depth; meant as an independent check on tiny inputs.
    """
    horizon = t + depth
    joint = np.zeros((horizon, pomdp.n_states, pomdp.n_actions))

    def expand(u, s, history, prob):
        if u == horizon:
            return
        probs = policy(history)
        joint[u, s] += prob * probs
        for a in np.flatnonzero(probs):
            for s2 in np.flatnonzero(pomdp.transition[s, a]):
                for o in np.flatnonzero(pomdp.observation[s, a, s2]):
                    expand(
                        u + 1,
                        s2,
                        history.append(a, o),
                        prob
                        * probs[a]
                        * pomdp.transition[s, a, s2]
                        * pomdp.observation[s, a, s2, o],
                    )

    for s0 in np.flatnonzero(pomdp.initial):
        if pomdp.initial_observation is None:
            expand(0, s0, History(), pomdp.initial[s0])
            continue
        for o0 in np.flatnonzero(pomdp.initial_observation[s0]):
            expand(
                0,
                s0,
                History(o0),
                pomdp.initial[s0] * pomdp.initial_observation[s0, o0],
            )

    values = np.zeros(pomdp.n_states)
    for u in range(horizon - 1, t - 1, -1):
        marginal = joint[u].sum(axis=1, keepdims=True)
        conditional = np.divide(
            joint[u], marginal, out=np.zeros_like(joint[u]), where=marginal > 0
        )
        q = pomdp.reward + pomdp.gamma * pomdp.transition @ values
        values = np.sum(conditional * q, axis=1)
    return float(values[state])


def verify_timed(
    times=range(6), depth=250, n_pomdps=5, seed=DEFAULT_SEED
):
    """Timed state values against stationary and brute-force references."""
    report = Report("timed")
    pomdp, _ = build_goodbad(GoodBadSpec(0.9))
    policy = _last_observation_policy()
    stationary = v_state_reactive(pomdp, policy)
    worst = 0.0
    for t in times:
        for s in (GOOD, BAD):
            value = v_timed_state(pomdp, policy, t, s, depth)
            gap = abs(value - stationary[s])
            worst = max(worst, gap)
            report.check(gap <= 1e-8, f"goodbad V_{t}({s}) off by {gap:.3g}")
    report.numbers["goodbad_max_gap"] = worst

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_pomdps):
        small = random_pomdp(rng, n_states=3, n_actions=2, n_obs=2)
        policy = RandomHistoryPolicy(small.n_actions, seed=i)
        for s in range(small.n_states):
            reference = trajectory_tree_timed_value(small, policy, 2, s, 2)
            value = v_timed_state(small, policy, 2, s, 2)
            gap = abs(value - reference)
            worst = max(worst, gap)
            report.check(
                gap <= 1e-10, f"pomdp {i}: V_2({s}) off by {gap:.3g}"
            )
    report.numbers["random_max_gap"] = worst
    return report


def _random_history(rng, n_actions, n_obs, length):
    history = History(int(rng.integers(n_obs)))
    for _ in range(length):
        history = history.append(
            int(rng.integers(n_actions)), int(rng.integers(n_obs))
        )
    return history


def gradcheck_cases(sizes=NetworkSizes(6, 5, (7, 4)), n_actions=3, n_obs=4):
    """(name, module, forward, sample_inputs) for every network block."""
    rng = np.random.default_rng(DEFAULT_SEED)
    n_states = 5
    cases = [
        (
            "embedding",
            Embedding(n_obs, sizes.embedding, rng),
            lambda m, x: m(x),
            lambda r: list(r.integers(n_obs, size=3)),
        ),
        (
            "linear",
            Linear(4, 3, rng),
            lambda m, x: m(ad.Tensor(x)),
            lambda r: r.normal(size=(2, 4)),
        ),
        (
            "mlp",
            MlpHead(4, 2, sizes.mlp, rng),
            lambda m, x: m(ad.Tensor(x)),
            lambda r: r.normal(size=(3, 4)),
        ),
        (
            "gru",
            GruCell(4, sizes.hidden, rng),
            lambda m, x: m.unroll(ad.Tensor(x))[0],
            lambda r: r.normal(size=(5, 4)),
        ),
        (
            "encoder",
            HistoryEncoder(n_actions, n_obs, sizes, rng=rng),
            lambda m, h: m.encode_prefixes(h),
            lambda r: _random_history(r, n_actions, n_obs, 5),
        ),
        (
            "actor",
            Actor(n_actions, n_obs, sizes, rng=rng),
            lambda m, h: ad.log_softmax(m(m.encoder.encode_prefixes(h))),
            lambda r: _random_history(r, n_actions, n_obs, 5),
        ),
    ]
    for kind in ALL_KINDS:
        cases.append(
            (
                f"critic-{kind.label}",
                Critic(kind, n_states, n_actions, n_obs, sizes, rng),
                lambda m, x: m.values(*x),
                lambda r: (
                    _random_history(r, n_actions, n_obs, 5),
                    list(r.integers(n_states, size=6)),
                ),
            )
        )
    return cases


def verify_gradcheck(tolerance=1e-4, n_samples=3, seed=DEFAULT_SEED):
    """Backpropagation against central finite differences per block."""
    report = Report("gradcheck")
    rng = np.random.default_rng(seed)
    for name, module, forward, sample in gradcheck_cases():
        result = gradcheck(
            module, forward, sample, rng, tolerance, n_samples=n_samples
        )
        report.numbers[name] = max(
            (g.max_error for g in result.groups.values()), default=0.0
        )
        for group in result.failed_groups():
            report.check(False, f"{name}.{group}: {result.groups[group]}")
    return report


VERIFIERS = {
    "goodbad": verify_goodbad,
    "theorem2": verify_theorem2,
    "theorem3": verify_theorem3,
    "theorem4": verify_theorem4,
    "theorem5": verify_theorem5,
    "timed": verify_timed,
    "gradcheck": verify_gradcheck,
}


def run(command, **kwargs):
    """Run one command, or all of them for 'all'.

    Returns:
        (list of Report): One report per command run.

    Raises:
        KeyError: For an unknown command.
    """
    if command == "all":
        return [VERIFIERS[name]() for name in COMMANDS]
    try:
        verifier = VERIFIERS[command]
    except KeyError:
        raise KeyError(
            f"Unknown verification '{command}', expected one of "
            f"{list(COMMANDS) + ['all']}"
        ) from None
    report = verifier(**kwargs)
    log.info("verify %s: %s", command, "PASS" if report.passed else "FAIL")
    return [report]


def all_passed(reports):
    """Whether every report passed."""
    return all(report.passed for report in reports)
