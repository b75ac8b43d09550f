"""The recurrent actor and the critic variants of the A2C learners.

Histories are fed to a GRU as (action, observation) pairs. The initial
observation, if the environment emits one, is paired with a designated
start-of-sequence action symbol, index ``n_actions`` of the action
embedding. The empty history encodes to the zero hidden state.
"""
import copy
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolationError
from .nn import (
    EMBEDDING_SIZE,
    HIDDEN_SIZE,
    MLP_SIZES,
    Adam,
    Embedding,
    GruCell,
    MlpHead,
    Module,
    load_checkpoint,
    read_checkpoint_meta,
    save_checkpoint,
)

log = logging.getLogger(__name__)

TRUNCATIONS = (2, 4)
OPTIMIZER_NAMES = ("actor", "critic")


@dataclass(frozen=True)
class CriticKind:
    """Which information the critic receives.

    Attributes:
        name (str): 'history', 'state', 'history-state',
            'history-state-sampled' or 'truncated-history'.
        k (int): The number of latest (action, observation) pairs seen by
            the truncated kinds, None otherwise.
    """

    name: str
    k: object = None

    NAMES = (
        "history",
        "state",
        "history-state",
        "history-state-sampled",
        "truncated-history",
    )

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ContractViolationError(f"Unknown critic kind '{self.name}'")
        if (self.name == "truncated-history") != (self.k is not None):
            raise ContractViolationError(
                "Only truncated-history critics take a truncation k"
            )
        if self.k is not None and self.k not in TRUNCATIONS:
            raise ContractViolationError(
                f"Truncation k={self.k} not in {TRUNCATIONS}"
            )

    def __str__(self):
        return self.label

    @property
    def label(self):
        """The short command line name: h, s, hs, hs-sampled, h2 or h4."""
        if self.k is not None:
            return f"h{self.k}"
        return {
            "history": "h",
            "state": "s",
            "history-state": "hs",
            "history-state-sampled": "hs-sampled",
        }[self.name]

    @property
    def uses_history(self):
        """Whether the critic encodes the history."""
        return self.name != "state"

    @property
    def uses_state(self):
        """Whether the critic embeds a state."""
        return self.name in ("state", "history-state", "history-state-sampled")

    @property
    def samples_state(self):
        """Whether the critic's state is drawn from the belief."""
        return self.name == "history-state-sampled"

    @classmethod
    def parse(cls, text):
        """Build a kind from its short label or its name.

        Raises:
            ContractViolationError: If the text names no kind.
        """
        for kind in ALL_KINDS:
            if text in (kind.label, kind.name) and (
                kind.k is None or text == kind.label
            ):
                return kind
        raise ContractViolationError(
            f"Unknown critic kind '{text}', expected one of "
            f"{[kind.label for kind in ALL_KINDS]}"
        )


HISTORY = CriticKind("history")
STATE = CriticKind("state")
HISTORY_STATE = CriticKind("history-state")
HISTORY_STATE_SAMPLED = CriticKind("history-state-sampled")
TRUNCATED_2 = CriticKind("truncated-history", 2)
TRUNCATED_4 = CriticKind("truncated-history", 4)
ALL_KINDS = (
    HISTORY,
    STATE,
    HISTORY_STATE,
    HISTORY_STATE_SAMPLED,
    TRUNCATED_2,
    TRUNCATED_4,
)


@dataclass(frozen=True)
class NetworkSizes:
    """Widths of the agent networks."""

    embedding: int = EMBEDDING_SIZE
    hidden: int = HIDDEN_SIZE
    mlp: tuple = MLP_SIZES

    def to_dict(self):
        """Plain representation for checkpoint meta data."""
        return {
            "embedding": self.embedding,
            "hidden": self.hidden,
            "mlp": list(self.mlp),
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(data["embedding"], data["hidden"], tuple(data["mlp"]))


class HistoryEncoder(Module):
    """Action and observation embeddings feeding a GRU.

    Args:
        n_actions (int): Number of actions; one more embedding row holds
            the start-of-sequence symbol.
        n_obs (int): Number of observations.
        sizes (NetworkSizes): Embedding and hidden widths.
        truncation (int): If set, every history is encoded from the zero
            state over its latest ``truncation`` pairs only.
        rng (numpy.random.Generator): Initialization stream.
    """

    def __init__(self, n_actions, n_obs, sizes, truncation=None, rng=None):
        self.start_action = n_actions
        self.truncation = truncation
        self.action_embedding = Embedding(n_actions + 1, sizes.embedding, rng)
        self.observation_embedding = Embedding(n_obs, sizes.embedding, rng)
        self.gru = GruCell(2 * sizes.embedding, sizes.hidden, rng)

    def pairs(self, history):
        """The (action symbol, observation) inputs of a history."""
        pairs = history.pairs(start_action=self.start_action)
        if self.truncation is not None:
            pairs = pairs[-self.truncation :] if pairs else pairs
        return pairs

    def inputs(self, pairs):
        """GRU inputs of shape (len(pairs), 2 * embedding)."""
        actions = [a for a, _ in pairs]
        observations = [o for _, o in pairs]
        return ad.concat(
            [
                self.action_embedding(actions),
                self.observation_embedding(observations),
            ],
            axis=-1,
        )

    def step(self, pair, h):
        """Advance the hidden state by one pair."""
        return self.gru(self.inputs([pair])[0], h)

    def encode(self, history):
        """The hidden state after the history, shape (hidden,)."""
        h = self.gru.initial_state()
        pairs = self.pairs(history)
        if pairs:
            xs = self.inputs(pairs)
            for t in range(len(pairs)):
                h = self.gru(xs[t], h)
        return h

    def encode_prefixes(self, history):
        """Features of every prefix h_0 .. h_T, shape (T + 1, hidden)."""
        if self.truncation is not None:
            return ad.stack(
                [
                    self.encode(history.prefix(t))
                    for t in range(len(history) + 1)
                ]
            )
        pairs = self.pairs(history)
        h = self.gru.initial_state()
        features = [] if history.initial is not None else [h]
        if pairs:
            xs = self.inputs(pairs)
            for t in range(len(pairs)):
                h = self.gru(xs[t], h)
                features.append(h)
        return ad.stack(features)


class Actor(Module):
    """History encoder and policy head producing action logits."""

    def __init__(self, n_actions, n_obs, sizes, truncation=None, rng=None):
        self.encoder = HistoryEncoder(n_actions, n_obs, sizes, truncation, rng)
        self.head = MlpHead(sizes.hidden, n_actions, sizes.mlp, rng)

    def forward(self, features):
        """Action logits for encoded histories."""
        return self.head(features)


class Critic(Module):
    """Scalar value head over history features and/or a state embedding."""

    def __init__(self, kind, n_states, n_actions, n_obs, sizes, rng=None):
        self.kind = kind
        width = 0
        self.encoder = None
        self.state_embedding = None
        if kind.uses_history:
            self.encoder = HistoryEncoder(
                n_actions, n_obs, sizes, kind.k, rng
            )
            width += sizes.hidden
        if kind.uses_state:
            self.state_embedding = Embedding(n_states, sizes.embedding, rng)
            width += sizes.embedding
        self.head = MlpHead(width, 1, sizes.mlp, rng)

    def forward(self, features, states):
        """Values of shape (N,) for N (history features, state) inputs.

        Args:
            features (Tensor): Shape (N, hidden), None for the state kind.
            states (sequence of int): N states, ignored by history kinds.
        """
        parts = []
        if self.encoder is not None:
            parts.append(features)
        if self.state_embedding is not None:
            if states is None or any(s is None for s in states):
                raise ContractViolationError(
                    f"The {self.kind} critic needs the states"
                )
            parts.append(self.state_embedding(list(states)))
        x = parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)
        return self.head(x)[:, 0]

    def values(self, history, states):
        """Values of every prefix of ``history`` paired with ``states``."""
        features = (
            self.encoder.encode_prefixes(history)
            if self.encoder is not None
            else None
        )
        return self(features, states)


class ActorPolicy:
    """The actor as a history → distribution callable for sampling.

    Hidden states are cached so that a history extending the previous call
    by one pair costs one GRU step.
    """

    def __init__(self, actor):
        self.actor = actor
        self._history = None
        self._hidden = None

    def __call__(self, history):
        encoder = self.actor.encoder
        with ad.no_grad():
            if encoder.truncation is not None:
                hidden = encoder.encode(history)
            elif (
                self._history is not None
                and len(history) == len(self._history) + 1
                and history.prefix(len(self._history)) == self._history
            ):
                hidden = encoder.step(history.steps[-1], self._hidden)
            else:
                hidden = encoder.encode(history)
            self._history, self._hidden = history, hidden
            logits = self.actor(hidden).data
        probs = np.exp(logits - logits.max())
        return probs / probs.sum()


class AgentNets:
    """Actor, critic and the frozen target copy of the critic.

    Actor and critic share no parameters. For truncated kinds the actor is
    truncated to the same k.
    """

    def __init__(
        self, kind, n_states, n_actions, n_obs, sizes=NetworkSizes(), rng=None
    ):
        rng = rng or np.random.default_rng(0)
        self.kind = kind
        self.n_states = n_states
        self.n_actions = n_actions
        self.n_obs = n_obs
        self.sizes = sizes
        self.actor = Actor(n_actions, n_obs, sizes, kind.k, rng)
        self.critic = Critic(kind, n_states, n_actions, n_obs, sizes, rng)
        self.target_critic = copy.deepcopy(self.critic)

    def __repr__(self):
        return (
            f"AgentNets(kind={self.kind}, states={self.n_states}, "
            f"actions={self.n_actions}, observations={self.n_obs})"
        )

    def policy(self):
        """A fresh sampling policy over the current actor."""
        return ActorPolicy(self.actor)

    def refresh_target(self):
        """Copy the critic into the target critic."""
        self.target_critic.copy_from(self.critic)

    def meta(self):
        """Constructor arguments for checkpoints."""
        return {
            "kind": self.kind.label,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_obs": self.n_obs,
            "sizes": self.sizes.to_dict(),
        }


def encode_history(nets, history):
    """The actor's features of a history, shape (hidden,)."""
    return nets.actor.encoder.encode(history)


def _modules(nets):
    return {
        "actor": nets.actor,
        "critic": nets.critic,
        "target_critic": nets.target_critic,
    }


def save_agent(path, nets, optimizers=None, meta=None):
    """Checkpoint the networks, optimizer states and meta data.

    Args:
        path (str): Target ``.npz`` file.
        nets (AgentNets): The networks.
        optimizers (tuple of Adam): The actor and critic optimizers, in that
            order, as held by ``TrainResult.optimizers``.
        meta (dict): Extra JSON-serializable information.

    Raises:
        ContractViolationError: If not exactly two optimizers are given.
    """
    optimizers = tuple(optimizers or ())
    if optimizers and len(optimizers) != len(OPTIMIZER_NAMES):
        raise ContractViolationError(
            f"Expected the {OPTIMIZER_NAMES} optimizers, got "
            f"{len(optimizers)}"
        )
    named = dict(zip(OPTIMIZER_NAMES, optimizers))
    document = dict(meta or {})
    document["agent"] = nets.meta()
    document["learning_rates"] = {
        name: optimizer.lr for name, optimizer in named.items()
    }
    save_checkpoint(path, _modules(nets), named, document)


def load_agent(path):
    """Rebuild the networks of a checkpoint written by :func:`save_agent`.

    Returns:
        (AgentNets, tuple, dict): The networks, the restored (actor, critic)
            optimizers or None if none were saved, and the meta data.
    """
    document = read_checkpoint_meta(path)
    agent = document["agent"]
    nets = AgentNets(
        CriticKind.parse(agent["kind"]),
        agent["n_states"],
        agent["n_actions"],
        agent["n_obs"],
        NetworkSizes.from_dict(agent["sizes"]),
    )
    rates = document.get("learning_rates") or {}
    named = {
        name: Adam(getattr(nets, name).parameters(), rates[name])
        for name in OPTIMIZER_NAMES
        if name in rates
    }
    meta = load_checkpoint(path, _modules(nets), named)
    optimizers = tuple(named[name] for name in OPTIMIZER_NAMES) or None
    return nets, optimizers, meta
