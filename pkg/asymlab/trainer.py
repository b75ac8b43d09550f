"""Advantage actor-critic training with the critic variants of the agent.

One update consumes E complete episodes. With δ_t = r_t + γ v̂'(next) −
v̂(current), where v̂' is the frozen target critic, the losses are averaged
over the episodes of per-episode sums::

    policy      −Σ_t γ^t δ_t log π(a_t; h_t)     (γ^t optional)
    critic       Σ_t δ_t²
    negentropy   Σ_t Σ_a π(a; h_t) log π(a; h_t), weighted by λ

The bootstrap is zero after a terminal step and the target critic's value
after a step-cap truncation. Actor and critic have their own Adam.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .agent import AgentNets, NetworkSizes
from .config import TrainConfig
from .errors import (
    ContractViolationError,
    TrainingDivergenceError,
    UnrealizableHistoryError,
)
from .event import EventSet
from .gradients import GradientTable
from .nn import Adam
from .oracle import belief_of_history, belief_update, continuation_mask
from .pomdp import History, sample_episode, sample_index
from .utilities import make_rng

log = logging.getLogger(__name__)

EVENTS = (
    "episode-finished",
    "update-finished",
    "target-updated",
    "probe-recorded",
)
ROLLING_WINDOW = 100
INIT_STREAM = -1


def negentropy_schedule(
    timestep, lambda0, decay_steps=2_000_000, final_fraction=0.1
):
    """λ(t) = λ0 (1 − (1 − final_fraction) min(t, D) / D).

    Raises:
        ContractViolationError: If the timestep is negative.
    """
    if timestep < 0:
        raise ContractViolationError(f"timestep={timestep} must be >= 0")
    progress = min(timestep, decay_steps) / decay_steps
    return lambda0 * (1.0 - (1.0 - final_fraction) * progress)


class LearningCurve:
    """Undiscounted episode returns against the timestep they ended at."""

    def __init__(self, timesteps=(), returns=()):
        self.timesteps = []
        self.returns = []
        for timestep, value in zip(timesteps, returns):
            self.record(timestep, value)

    def __len__(self):
        return len(self.timesteps)

    def __eq__(self, other):
        if not isinstance(other, LearningCurve):
            return NotImplemented
        return (
            self.timesteps == other.timesteps and self.returns == other.returns
        )

    def record(self, timestep, value):
        """Append an episode; timesteps must strictly increase."""
        if self.timesteps and timestep <= self.timesteps[-1]:
            raise ContractViolationError(
                f"Timestep {timestep} does not follow {self.timesteps[-1]}"
            )
        self.timesteps.append(int(timestep))
        self.returns.append(float(value))

    def rolling(self, window=ROLLING_WINDOW):
        """Mean over the last ``window`` episodes, per episode."""
        returns = np.asarray(self.returns, dtype=np.float64)
        if not returns.size:
            return returns
        cumulative = np.concatenate([[0.0], np.cumsum(returns)])
        ends = np.arange(1, returns.size + 1)
        starts = np.maximum(ends - window, 0)
        return (cumulative[ends] - cumulative[starts]) / (ends - starts)

    def final_rolling(self, window=ROLLING_WINDOW):
        """The last rolling mean, nan for an empty curve."""
        rolling = self.rolling(window)
        return float(rolling[-1]) if rolling.size else math.nan

    def rows(self):
        """(timestep, episode, return, rolling100) per episode."""
        return [
            (timestep, episode, value, rolling)
            for episode, (timestep, value, rolling) in enumerate(
                zip(self.timesteps, self.returns, self.rolling().tolist())
            )
        ]

    def to_dict(self):
        """Plain representation for json artifacts."""
        return {"timesteps": self.timesteps, "returns": self.returns}

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(data["timesteps"], data["returns"])


@dataclass
class ProbeLog:
    """Critic outputs on fixed probes over training."""

    records: list = field(default_factory=list)

    def record(self, timestep, probe_id, kind, value):
        """Append one critic output."""
        self.records.append((int(timestep), probe_id, str(kind), float(value)))

    def rows(self):
        """(timestep, probe_id, kind, value) in recording order."""
        return list(self.records)

    def values(self, probe_id):
        """The recorded outputs of one probe."""
        return [value for _, pid, _, value in self.records if pid == probe_id]

    def to_dict(self):
        """Plain representation for json artifacts."""
        return {"records": [list(record) for record in self.records]}

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls([tuple(record) for record in data["records"]])


@dataclass
class Episode:
    """A trajectory and the states its critic is fed with."""

    trajectory: object
    critic_states: object = None

    @property
    def history(self):
        """The full history of the episode."""
        return self.trajectory.history(len(self.trajectory))


def critic_states(pomdp, terminals, trajectory, kind, rng):
    """The states paired with h_0 .. h_T at the critic input.

    True states for state-aware kinds, s̃_t ~ b(h_t) for the belief-sampled
    kind, None for history-only kinds.
    """
    if not kind.uses_state:
        return None
    if not kind.samples_state:
        return tuple(trajectory.states)
    continuation = continuation_mask(pomdp, terminals)
    belief = belief_of_history(
        pomdp, History(trajectory.initial_observation), terminals
    )
    sampled = [sample_index(belief.probabilities, rng)]
    for action, observation in zip(
        trajectory.actions, trajectory.observations
    ):
        try:
            belief = belief_update(
                pomdp, belief, action, observation, continuation
            )
        except UnrealizableHistoryError:
            # past the terminal step the belief is not defined, the state
            # then only feeds a zero bootstrap
            sampled.append(trajectory.states[len(sampled)])
            continue
        sampled.append(sample_index(belief.probabilities, rng))
    return tuple(sampled)


def _policy_terms(nets, episode):
    """log π(a_t; h_t), and Σ_a π log π per step, shape (T,) each."""
    steps = len(episode.trajectory)
    features = nets.actor.encoder.encode_prefixes(episode.history)
    log_probs = ad.log_softmax(nets.actor(features[:steps]))
    chosen = log_probs[np.arange(steps), list(episode.trajectory.actions)]
    negentropy = (ad.exp(log_probs) * log_probs).sum(axis=-1)
    return chosen, negentropy


def _td_terms(nets, episode, gamma):
    """v̂(current) as a Tensor and the constant TD targets, shape (T,)."""
    trajectory = episode.trajectory
    steps = len(trajectory)
    values = nets.critic.values(episode.history, episode.critic_states)
    with ad.no_grad():
        following = nets.target_critic.values(
            episode.history, episode.critic_states
        ).data[1:]
    if not trajectory.truncated:
        following = following.copy()
        following[-1] = 0.0
    targets = np.asarray(trajectory.rewards) + gamma * following
    return values[:steps], targets


def td_errors(nets, episodes, gamma):
    """δ_t per episode, as numpy arrays."""
    errors = []
    with ad.no_grad():
        for episode in episodes:
            if not len(episode.trajectory):
                errors.append(np.zeros(0))
                continue
            values, targets = _td_terms(nets, episode, gamma)
            errors.append(targets - values.data)
    return errors


@dataclass
class UpdateResult:
    """Loss components of one update."""

    policy_loss: float
    critic_loss: float
    negentropy_loss: float
    negentropy_weight: float
    steps: int


def _max_abs(module):
    return max(
        (float(np.max(np.abs(p.data))) for p in module.parameters()),
        default=0.0,
    )


def update(nets, episodes, config, negentropy_weight, optimizers, gamma):
    """One actor and one critic Adam step from a batch of episodes.

    Args:
        nets (AgentNets): The networks.
        episodes (list of Episode): The batch.
        config (TrainConfig): Provides the γ^t flag.
        negentropy_weight (float): The current λ.
        optimizers (tuple of Adam): Actor and critic optimizers.
        gamma (float): The discount of the environment.

    Raises:
        TrainingDivergenceError: If a loss is not finite; no step is taken.
    """
    actor_optimizer, critic_optimizer = optimizers
    episodes = [e for e in episodes if len(e.trajectory)]
    if not episodes:
        return UpdateResult(0.0, 0.0, 0.0, negentropy_weight, 0)
    actor_optimizer.zero_grad()
    critic_optimizer.zero_grad()
    policy_loss = critic_loss = negentropy_loss = 0.0
    for episode in episodes:
        steps = len(episode.trajectory)
        values, targets = _td_terms(nets, episode, gamma)
        delta = targets - values
        chosen, negentropy = _policy_terms(nets, episode)
        weights = delta.data.copy()
        if config.gamma_t_weighting:
            weights *= gamma ** np.arange(steps)
        policy_loss = policy_loss - (chosen * weights).sum()
        critic_loss = critic_loss + (delta * delta).sum()
        negentropy_loss = negentropy_loss + negentropy.sum()
    scale = 1.0 / len(episodes)
    policy_loss = policy_loss * scale
    critic_loss = critic_loss * scale
    negentropy_loss = negentropy_loss * scale
    losses = {
        "policy_loss": policy_loss.item(),
        "critic_loss": critic_loss.item(),
        "negentropy_loss": negentropy_loss.item(),
    }
    if not all(math.isfinite(value) for value in losses.values()):
        raise TrainingDivergenceError(
            "Non-finite loss: "
            + ", ".join(f"{k}={v}" for k, v in losses.items()),
            diagnostics=dict(
                losses,
                negentropy_weight=negentropy_weight,
                max_abs_actor_parameter=_max_abs(nets.actor),
                max_abs_critic_parameter=_max_abs(nets.critic),
                episode_returns=[
                    e.trajectory.undiscounted_return() for e in episodes
                ],
            ),
        )
    (policy_loss + negentropy_loss * negentropy_weight).backward()
    critic_loss.backward()
    actor_optimizer.step()
    critic_optimizer.step()
    return UpdateResult(
        negentropy_weight=negentropy_weight,
        steps=sum(len(e.trajectory) for e in episodes),
        **losses,
    )


def build_nets(pomdp, config, kind, seed, run=0):
    """Networks initialized from the run's initialization stream."""
    return AgentNets(
        kind,
        pomdp.n_states,
        pomdp.n_actions,
        pomdp.n_obs,
        NetworkSizes(
            config.embedding_size, config.hidden_size, config.mlp_sizes
        ),
        make_rng(seed, run, INIT_STREAM),
    )


def probe_critic(nets, probes, pomdp=None, terminals=None):
    """Raw critic outputs on (name, history, state) probes.

    History kinds ignore the state, the state kind ignores the history.

    Returns:
        (list of (str, float)): Probe name and critic output.

    Raises:
        UnrealizableHistoryError: If a POMDP is given and a probe has zero
            probability in it.
    """
    results = []
    with ad.no_grad():
        for name, history, state in probes:
            if pomdp is not None:
                args = () if terminals is None else (terminals,)
                belief = belief_of_history(pomdp, history, *args)
                if belief[state] <= 0.0:
                    raise UnrealizableHistoryError(
                        f"Probe {name}: state {state} has zero probability "
                        f"given {history!r}",
                        history,
                    )
            critic = nets.critic
            features = None
            if critic.encoder is not None:
                features = ad.stack([critic.encoder.encode(history)])
            value = critic(features, [state]).data[0]
            results.append((name, float(value)))
    return results


@dataclass
class TrainResult:
    """Everything a training run produced."""

    curve: LearningCurve
    nets: AgentNets
    optimizers: tuple
    probe_log: ProbeLog
    timesteps: int = 0
    updates: int = 0
    target_refreshes: int = 0


def train(
    pomdp,
    terminals,
    config,
    kind,
    seed=None,
    run=0,
    probes=None,
    events=None,
):
    """Train an actor-critic agent.

    Episode e of the run samples with the stream ``make_rng(seed, run, e)``
    and the networks are initialized from stream -1, so a run is a pure
    function of (seed, run, config, kind, environment).

    Args:
        pomdp (Pomdp): The environment.
        terminals (TerminalSpec): Where its episodes end.
        config (TrainConfig): The knobs.
        kind (CriticKind): The critic variant.
        seed (int): The master seed, defaults to ``config.seed``.
        run (int): The run index within the experiment.
        probes (list of (str, History, int)): Recorded into the probe log
            every ``config.probe_period`` timesteps.
        events (EventSet): Receives the training events, see ``EVENTS``.

    Returns:
        (TrainResult): The curve, networks and probe log.

    Raises:
        TrainingDivergenceError: With the curve so far attached.
    """
    seed = config.seed if seed is None else seed
    events = events if events is not None else EventSet(EVENTS)
    nets = build_nets(pomdp, config, kind, seed, run)
    optimizers = (
        Adam(nets.actor.parameters(), config.lr_actor),
        Adam(nets.critic.parameters(), config.lr_critic),
    )
    result = TrainResult(LearningCurve(), nets, optimizers, ProbeLog())
    next_target = config.target_update_period
    next_probe = 0
    episode_index = 0
    log.info(
        "Training %s critic on %s for %d timesteps (seed %s, run %d)",
        kind,
        pomdp.name,
        config.max_timesteps,
        seed,
        run,
    )
    while result.timesteps < config.max_timesteps:
        if probes and result.timesteps >= next_probe:
            _record_probes(result, probes, events)
            next_probe += config.probe_period
        batch = []
        for _ in range(config.episodes_per_update):
            rng = make_rng(seed, run, episode_index)
            with ad.no_grad():
                trajectory = sample_episode(
                    pomdp,
                    terminals,
                    nets.policy(),
                    config.max_episode_steps,
                    rng,
                )
            episode = Episode(
                trajectory,
                critic_states(pomdp, terminals, trajectory, kind, rng),
            )
            batch.append(episode)
            result.timesteps += max(len(trajectory), 1)
            result.curve.record(
                result.timesteps, trajectory.undiscounted_return()
            )
            events["episode-finished"].emit(
                curve=result.curve, episode=episode_index
            )
            episode_index += 1
        weight = negentropy_schedule(
            result.timesteps,
            config.lambda0,
            config.entropy_decay_steps,
            config.entropy_final_fraction,
        )
        try:
            outcome = update(
                nets, batch, config, weight, optimizers, pomdp.gamma
            )
        except TrainingDivergenceError as exc:
            exc.curve = result.curve
            exc.diagnostics.update(
                timestep=result.timesteps, episode=episode_index
            )
            log.warning("Training diverged: %s", exc)
            raise
        result.updates += 1
        events["update-finished"].emit(
            result=outcome, timestep=result.timesteps
        )
        while result.timesteps >= next_target:
            nets.refresh_target()
            result.target_refreshes += 1
            next_target += config.target_update_period
            log.info(
                "Refreshed target critic at timestep %d", result.timesteps
            )
            events["target-updated"].emit(timestep=result.timesteps)
    if probes:
        _record_probes(result, probes, events)
    log.info(
        "Finished after %d episodes, final rolling return %.4f",
        len(result.curve),
        result.curve.final_rolling(),
    )
    return result


def _record_probes(result, probes, events):
    for name, value in probe_critic(result.nets, probes):
        result.probe_log.record(
            result.timesteps, name, result.nets.kind, value
        )
        events["probe-recorded"].emit(
            timestep=result.timesteps, probe_id=name, value=value
        )


def sampled_policy_gradient(
    policy, trajectories, critic, max_steps, gamma, gamma_t_weighting=True
):
    """The actor-loss gradient estimate of tabular softmax policies.

    Every trajectory contributes −Σ_t γ^t δ_t ∇_θ[h_t] log π(a_t; h_t) with
    δ_t = r_t + γ critic(h_{t+1}, s_{t+1}, d − t − 1) − critic(h_t, s_t,
    d − t), where d = max_steps and the bootstrap is zero after a
    terminal step.

    Args:
        policy (SoftmaxPolicy): The sampling policy.
        trajectories (list of Trajectory): Sampled with ``policy``.
        critic (callable): ``critic(history, state, remaining)``.
        max_steps (int): The step cap the trajectories were sampled with.
        gamma (float): The discount.

    Returns:
        (GradientTable, GradientTable): The mean estimate and its standard
            error per entry.
    """
    n = len(trajectories)
    total = GradientTable(policy.n_actions)
    squares = GradientTable(policy.n_actions)
    for trajectory in trajectories:
        episode = GradientTable(policy.n_actions)
        for t in range(len(trajectory)):
            history = trajectory.history(t)
            following = 0.0
            if trajectory.truncated or t < len(trajectory) - 1:
                following = critic(
                    trajectory.history(t + 1),
                    trajectory.states[t + 1],
                    max_steps - t - 1,
                )
            delta = (
                trajectory.rewards[t]
                + gamma * following
                - critic(history, trajectory.states[t], max_steps - t)
            )
            weight = gamma**t if gamma_t_weighting else 1.0
            episode.add(
                history,
                -weight
                * delta
                * policy.grad_log_probs(history, trajectory.actions[t]),
            )
        for key, value in episode.entries.items():
            history = episode.histories[key]
            total.add(history, value)
            squares.add(history, value * value)
    mean = GradientTable(policy.n_actions)
    stderr = GradientTable(policy.n_actions)
    for key, value in total.entries.items():
        history = total.histories[key]
        average = value / n
        variance = np.maximum(squares.entries[key] / n - average**2, 0.0)
        mean.add(history, average)
        stderr.add(history, np.sqrt(variance * n / max(n - 1, 1) / n))
    return mean, stderr
