"""Training configuration, preloaded hyperparameters and config files.

Config files are INI files with the sections ``[experiment]``, ``[train]``
and ``[grid]``; keys are the field names of the corresponding objects::

    [experiment]
    env = heavenhell-3
    critic = hs
    seeds = 0 1 2

    [train]
    max_timesteps = 500000
    gamma_t_weighting = true

    [grid]
    actor_rates = 0.0001 0.0003 0.001

Unknown sections, unknown keys and unparsable values raise a ConfigError.
"""
import configparser
import dataclasses
import logging
import os

from .errors import ConfigError

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "ASYMLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"

ENTROPY_DECAY_STEPS = 2_000_000
ENTROPY_FINAL_FRACTION = 0.1

# (environment, critic label) -> (actor rate, critic rate, initial lambda)
HYPERPARAMETERS = {
    ("heavenhell-3", "hs"): (0.001, 0.001, 0.1),
    ("heavenhell-3", "s"): (0.001, 0.001, 1.0),
    ("heavenhell-3", "h"): (0.001, 0.001, 0.1),
    ("heavenhell-3", "h2"): (0.001, 0.0003, 1.0),
    ("heavenhell-3", "h4"): (0.001, 0.0003, 1.0),
    ("heavenhell-4", "hs"): (0.001, 0.001, 0.1),
    ("heavenhell-4", "s"): (0.001, 0.001, 0.1),
    ("heavenhell-4", "h"): (0.001, 0.0003, 0.3),
    ("heavenhell-4", "h2"): (0.001, 0.0003, 0.3),
    ("heavenhell-4", "h4"): (0.001, 0.0003, 0.3),
    ("shopping-5", "hs"): (0.001, 0.0003, 3.0),
    ("shopping-5", "s"): (0.001, 0.001, 10.0),
    ("shopping-5", "h"): (0.001, 0.0003, 3.0),
    ("shopping-5", "h2"): (0.001, 0.001, 3.0),
    ("shopping-5", "h4"): (0.001, 0.001, 3.0),
    ("shopping-6", "hs"): (0.001, 0.0003, 3.0),
    ("shopping-6", "s"): (0.001, 0.001, 10.0),
    ("shopping-6", "h"): (0.001, 0.0003, 3.0),
    ("shopping-6", "h2"): (0.001, 0.001, 1.0),
    ("shopping-6", "h4"): (0.001, 0.0003, 10.0),
}
FALLBACK_HYPERPARAMETERS = (0.001, 0.001, 0.1)


def default_hyperparameters(env, kind):
    """(actor rate, critic rate, initial negentropy weight) for a cell.

    The belief-sampled history-state critic shares the history-state cell.

    Args:
        env (str): The environment name.
        kind (CriticKind or str): The critic kind or its label.
    """
    label = getattr(kind, "label", kind)
    if label == "hs-sampled":
        label = "hs"
    return HYPERPARAMETERS.get((env, label), FALLBACK_HYPERPARAMETERS)


def output_root():
    """The default output root, overridable by ASYMLAB_OUTPUT_ROOT."""
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Every knob of one training run.

    The discount is not configured here, it comes from the environment.
    """

    lr_actor: float = 0.001
    lr_critic: float = 0.001
    lambda0: float = 0.1
    entropy_decay_steps: int = ENTROPY_DECAY_STEPS
    entropy_final_fraction: float = ENTROPY_FINAL_FRACTION
    episodes_per_update: int = 2
    max_episode_steps: int = 100
    target_update_period: int = 10_000
    max_timesteps: int = 100_000
    seed: int = 0
    gamma_t_weighting: bool = True
    embedding_size: int = 64
    hidden_size: int = 128
    mlp_sizes: tuple = (512, 256)
    probe_period: int = 10_000

    def __post_init__(self):
        problems = []
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            problems.append("learning rates must be positive")
        if self.lambda0 < 0:
            problems.append("lambda0 must be non-negative")
        if self.episodes_per_update < 1:
            problems.append("episodes_per_update must be >= 1")
        if self.max_episode_steps < 1:
            problems.append("max_episode_steps must be >= 1")
        if self.max_timesteps < 0:
            problems.append("max_timesteps must be >= 0")
        if self.target_update_period < 1 or self.probe_period < 1:
            problems.append("periods must be >= 1")
        if self.entropy_decay_steps < 1:
            problems.append("entropy_decay_steps must be >= 1")
        if problems:
            raise ConfigError(f"Invalid TrainConfig: {'; '.join(problems)}")
        object.__setattr__(self, "mlp_sizes", tuple(self.mlp_sizes))

    def replace(self, **changes):
        """A copy with some fields changed."""
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"Unknown TrainConfig fields: {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """Plain representation for manifests."""
        data = dataclasses.asdict(self)
        data["mlp_sizes"] = list(self.mlp_sizes)
        return data

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls().replace(**data)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(text, example):
    """Parse INI text into the type of ``example``.

    Tuples and lists are whitespace or comma separated; their element type
    follows the first element of ``example`` (float if it is empty).
    """
    if isinstance(example, bool):
        return _parse_bool(text)
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    if isinstance(example, (tuple, list)):
        item = example[0] if example else 0.0
        values = [
            parse_value(part, item)
            for part in text.replace(",", " ").split()
        ]
        return type(example)(values)
    return text.strip()


def parse_section(section, fields, values):
    """Typed values of one INI section.

    Args:
        section (str): The section name, for error messages.
        fields (dict): Allowed key to example value (for the type).
        values (dict): Raw key to text.

    Raises:
        ConfigError: Unknown key or unparsable value.
    """
    parsed = {}
    for key, text in values.items():
        if key not in fields:
            raise ConfigError(
                f"Unknown key '{key}' in section [{section}], expected one "
                f"of {sorted(fields)}"
            )
        try:
            parsed[key] = parse_value(text, fields[key])
        except ValueError as exc:
            raise ConfigError(
                f"Invalid value for '{key}' in [{section}]: {exc}"
            ) from exc
    return parsed


def read_config_file(path, sections):
    """Read an INI file into typed sections.

    Args:
        path (str): The file.
        sections (dict): Allowed section name to its ``fields`` mapping
            (see :func:`parse_section`).

    Returns:
        (dict): Section name to typed values; absent sections are empty.

    Raises:
        ConfigError: Unreadable file, unknown section, key or value.
    """
    parser = configparser.ConfigParser(
        interpolation=None, default_section="__no_defaults__"
    )
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as stream:
            parser.read_file(stream)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    result = {name: {} for name in sections}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(
                f"Unknown section [{name}] in {path}, expected one of "
                f"{sorted(sections)}"
            )
        result[name] = parse_section(
            name, sections[name], dict(parser.items(name))
        )
    log.debug("Read config %s: %s", path, result)
    return result


TRAIN_FIELDS = {
    field.name: field.default for field in dataclasses.fields(TrainConfig)
}
