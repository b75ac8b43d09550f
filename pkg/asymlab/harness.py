"""Experiments, grid searches, aggregation and CSV artifacts.

An experiment trains one agent per seed and aggregates the learning curves.
It is evaluated as a graph::

    train-s0 --+
    train-s1 --+--> aggregate --> manifest
    train-s2 --+

and writes under its output directory::

    manifest.json             spec echo, code version, seeds, divergences
    aggregate.csv / .json     mean and standard error per timestep bucket
    runs/seed-<s>/curve.csv   one learning curve per seed (and .json)
    runs/seed-<s>/agent.npz   networks and optimizer states
    runs/seed-<s>/probes.csv  critic probes, Heaven-Hell only

A grid search runs one experiment per hyperparameter cell and ranks the
cells by their final rolling-100 return.
"""
import csv
import dataclasses
import itertools
import json
import logging
import math
import os

import numpy as np

from . import __version__
from .agent import CriticKind, load_agent, save_agent
from .config import TrainConfig, default_hyperparameters, output_root
from .envs import ENVIRONMENTS, heavenhell_fork_probes, make_environment
from .errors import (
    ConfigError,
    PomdpSemanticError,
    PomdpSyntaxError,
    TrainingDivergenceError,
)
from .gradients import GradientTable
from .oracle import BiasReport
from .pipeline import FunctionNode, Graph, INode, InputPlug, OutputPlug
from .pomdpfile import load_pomdp_path
from .trainer import LearningCurve, ProbeLog, probe_critic, train
from .utilities import ArtifactEncoder, source_fingerprint

log = logging.getLogger(__name__)

BUCKET_SIZE = 1000
MANIFEST = "manifest.json"
RANKING = "ranking.csv"

CURVE_COLUMNS = ("timestep", "episode", "return", "rolling100")
PROBE_COLUMNS = ("timestep", "probe_id", "kind", "value")
AGGREGATE_COLUMNS = ("timestep", "mean", "stderr", "n_runs")
GRADIENT_COLUMNS = ("history", "action", "value")
RANKING_COLUMNS = (
    "rank",
    "lr_actor",
    "lr_critic",
    "lambda0",
    "mean",
    "stderr",
    "n_runs",
    "diverged",
)

ACTOR_RATES = (0.0001, 0.0003, 0.001)
CRITIC_RATES = (0.0001, 0.0003, 0.001)
NEGENTROPY_WEIGHTS = {
    "heavenhell": (0.01, 0.03, 0.1, 0.3, 1.0),
    "shopping": (0.3, 1.0, 3.0, 10.0, 30.0),
}


def _float(value):
    """Floats are written with repr so that re-reading is exact."""
    return repr(float(value))


def resolve_environment(env=None, pomdp_file=None):
    """The (Pomdp, TerminalSpec) of a registered name or a POMDP file.

    Raises:
        ConfigError: Unknown name, or an unreadable or invalid file.
    """
    if pomdp_file:
        try:
            return load_pomdp_path(pomdp_file)
        except (OSError, PomdpSyntaxError, PomdpSemanticError) as exc:
            raise ConfigError(
                f"Cannot load POMDP file {pomdp_file}: {exc}"
            ) from exc
    if env is None:
        raise ConfigError("Either an environment or a POMDP file is needed")
    try:
        return make_environment(env)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun an experiment.

    Attributes:
        env (str): A registered environment name, or the label of
            ``pomdp_file``.
        kind (CriticKind): The critic variant.
        seeds (tuple of int): One training run per seed.
        out_dir (str): Where the artifacts go.
        overrides (dict): TrainConfig fields overriding the preloaded
            hyperparameters of (env, kind).
        pomdp_file (str): Optional POMDP file to train on instead.
    """

    env: str
    kind: CriticKind
    seeds: tuple = (0,)
    out_dir: str = dataclasses.field(default_factory=output_root)
    overrides: dict = dataclasses.field(default_factory=dict)
    pomdp_file: object = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", CriticKind.parse(self.kind))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("An experiment needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"Duplicate seeds in {self.seeds}")
        if self.pomdp_file is None and self.env not in ENVIRONMENTS:
            raise ConfigError(
                f"Unknown environment '{self.env}', available: "
                f"{sorted(ENVIRONMENTS)} or a POMDP file"
            )
        self.train_config()

    def train_config(self):
        """The preloaded hyperparameters with the overrides applied."""
        lr_actor, lr_critic, lambda0 = default_hyperparameters(
            self.env, self.kind
        )
        base = TrainConfig(
            lr_actor=lr_actor, lr_critic=lr_critic, lambda0=lambda0
        )
        return base.replace(**self.overrides)

    def environment(self):
        """The (Pomdp, TerminalSpec) to train on."""
        return resolve_environment(self.env, self.pomdp_file)

    def replace(self, **changes):
        """A copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """Plain representation for the manifest."""
        overrides = dict(self.overrides)
        if "mlp_sizes" in overrides:
            overrides["mlp_sizes"] = list(overrides["mlp_sizes"])
        return {
            "env": self.env,
            "kind": self.kind.label,
            "seeds": list(self.seeds),
            "out_dir": str(self.out_dir),
            "overrides": overrides,
            "pomdp_file": self.pomdp_file,
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        overrides = dict(data.get("overrides", {}))
        if "mlp_sizes" in overrides:
            overrides["mlp_sizes"] = tuple(overrides["mlp_sizes"])
        return cls(
            env=data["env"],
            kind=CriticKind.parse(data["kind"]),
            seeds=tuple(data["seeds"]),
            out_dir=data["out_dir"],
            overrides=overrides,
            pomdp_file=data.get("pomdp_file"),
        )

    @classmethod
    def from_manifest(cls, path):
        """The spec echoed in an experiment's manifest file or directory."""
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST)
        with open(path, encoding="utf-8") as stream:
            return cls.from_dict(json.load(stream)["spec"])


@dataclasses.dataclass(frozen=True)
class AggregateCurve:
    """Mean and standard error of the rolling return per timestep bucket.

    A run contributes to a bucket if one of its episodes ended in it, with
    the rolling-100 return after the last such episode. The standard error
    uses the runs present in the bucket, nan below two runs.
    """

    timesteps: tuple
    means: tuple
    stderrs: tuple
    counts: tuple

    def __len__(self):
        return len(self.timesteps)

    def at(self, timestep):
        """(mean, stderr, count) of the bucket ending at ``timestep``."""
        i = self.timesteps.index(timestep)
        return self.means[i], self.stderrs[i], self.counts[i]

    def rows(self):
        """(timestep, mean, stderr, n_runs) per bucket."""
        return list(zip(self.timesteps, self.means, self.stderrs, self.counts))

    def to_dict(self):
        """Plain representation for json artifacts."""
        return {
            "timesteps": list(self.timesteps),
            "means": list(self.means),
            "stderrs": list(self.stderrs),
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(
            tuple(data["timesteps"]),
            tuple(data["means"]),
            tuple(data["stderrs"]),
            tuple(data["counts"]),
        )


def mean_and_stderr(values):
    """Mean and standard error of the mean (ddof 1), nan where undefined."""
    values = np.asarray(values, dtype=np.float64)
    if not values.size:
        return math.nan, math.nan
    if values.size < 2:
        return float(values[0]), math.nan
    return (
        float(values.mean()),
        float(values.std(ddof=1) / math.sqrt(values.size)),
    )


def bucket_values(curve, bucket_size=BUCKET_SIZE):
    """The rolling return at the end of each bucket the run reached.

    Returns:
        (dict): Bucket end timestep to the rolling-100 return after the
            last episode that ended in the bucket.
    """
    values = {}
    for timestep, rolling in zip(curve.timesteps, curve.rolling()):
        end = math.ceil(timestep / bucket_size) * bucket_size
        values[end] = float(rolling)
    return values


def aggregate(curves, bucket_size=BUCKET_SIZE):
    """Aggregate learning curves of several runs.

    Args:
        curves (list of LearningCurve): Missing (None) runs are skipped.
        bucket_size (int): Width of the timestep buckets.

    Returns:
        (AggregateCurve): One entry per bucket reached by any run.
    """
    per_run = [bucket_values(c, bucket_size) for c in curves if c is not None]
    buckets = sorted(set().union(*per_run)) if per_run else []
    means, stderrs, counts = [], [], []
    for bucket in buckets:
        values = [run[bucket] for run in per_run if bucket in run]
        mean, stderr = mean_and_stderr(values)
        means.append(mean)
        stderrs.append(stderr)
        counts.append(len(values))
    return AggregateCurve(
        tuple(buckets), tuple(means), tuple(stderrs), tuple(counts)
    )


def write_csv(path, columns, rows):
    """Write a CSV with a header row; floats keep their full precision."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                _float(cell) if isinstance(cell, float) else cell
                for cell in row
            )
    log.debug("Wrote %s", path)
    return path


def write_json(path, data):
    """Write a json artifact with sorted keys."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(data, stream, cls=ArtifactEncoder, indent=2, sort_keys=True)
        stream.write("\n")
    return path


def export_csv(artifact, path):
    """Write an artifact as CSV.

    =====================  ==============================================
    LearningCurve          timestep, episode, return, rolling100
    ProbeLog               timestep, probe_id, kind, value
    AggregateCurve         timestep, mean, stderr, n_runs
    BiasReport             v_h, e_vs, e_vhs, gap_state, gap_hs (one row)
    GradientTable          history, action, value
    list of ranked cells   rank, lr_actor, lr_critic, lambda0, mean, ...
    =====================  ==============================================

    Raises:
        TypeError: For any other artifact.
    """
    if isinstance(artifact, LearningCurve):
        return write_csv(path, CURVE_COLUMNS, artifact.rows())
    if isinstance(artifact, ProbeLog):
        return write_csv(path, PROBE_COLUMNS, artifact.rows())
    if isinstance(artifact, AggregateCurve):
        return write_csv(path, AGGREGATE_COLUMNS, artifact.rows())
    if isinstance(artifact, BiasReport):
        return write_csv(path, BiasReport.FIELDS, [artifact.to_row()])
    if isinstance(artifact, GradientTable):
        return write_csv(path, GRADIENT_COLUMNS, artifact.to_rows())
    if isinstance(artifact, list) and all(
        isinstance(cell, CellResult) for cell in artifact
    ):
        return write_csv(
            path,
            RANKING_COLUMNS,
            [cell.row(rank) for rank, cell in enumerate(artifact, 1)],
        )
    raise TypeError(f"Can not export {type(artifact).__name__} as CSV")


def run_dir(out_dir, seed):
    """The directory holding the artifacts of one seed."""
    return os.path.join(out_dir, "runs", f"seed-{seed}")


def probes_for(env):
    """The fork probes of Heaven-Hell environments, else None."""
    if env.startswith("heavenhell-"):
        return heavenhell_fork_probes(int(env.rsplit("-", 1)[1]))
    return None


def train_seed(spec, seed):
    """Train one seed of an experiment and write its artifacts.

    A diverged run keeps its partial curve and a ``divergence.json``; the
    divergence is reported in the summary, not raised.

    Args:
        spec (dict): The ExperimentSpec as a dict, for worker processes.
        seed (int): The master seed of the run.

    Returns:
        (dict): ``{"summary": {...}}`` with the seed, the curve as a dict,
            whether it diverged and the final rolling return.
    """
    spec = ExperimentSpec.from_dict(spec)
    pomdp, terminals = spec.environment()
    config = spec.train_config()
    directory = run_dir(spec.out_dir, seed)
    probes = probes_for(spec.env)
    diverged = None
    try:
        result = train(
            pomdp, terminals, config, spec.kind, seed=seed, probes=probes
        )
    except TrainingDivergenceError as exc:
        log.warning("Seed %d diverged: %s", seed, exc)
        curve = exc.curve or LearningCurve()
        diverged = exc.diagnostics
        write_json(os.path.join(directory, "divergence.json"), diverged)
    else:
        curve = result.curve
        save_agent(
            os.path.join(directory, "agent.npz"),
            result.nets,
            result.optimizers,
            {"seed": seed, "config": config.to_dict(), "env": spec.env},
        )
        if probes:
            write_json(
                os.path.join(directory, "probes.json"),
                result.probe_log.to_dict(),
            )
            export_csv(result.probe_log, os.path.join(directory, "probes.csv"))
    write_json(os.path.join(directory, "curve.json"), curve.to_dict())
    export_csv(curve, os.path.join(directory, "curve.csv"))
    return {
        "summary": {
            "seed": seed,
            "curve": curve.to_dict(),
            "diverged": diverged is not None,
            "final_rolling": curve.final_rolling(),
        }
    }


class AggregateNode(INode):
    """Collect the run summaries of all seeds and aggregate their curves."""

    def __init__(self, out_dir, name="aggregate", graph=None):
        super().__init__(name=name, graph=graph)
        self.out_dir = out_dir
        OutputPlug("aggregate", self)
        OutputPlug("summaries", self)

    def add_run(self, node):
        """Connect the summary of a training node to a new input."""
        plug = InputPlug(f"run{len(self.inputs)}", self)
        node.outputs["summary"].connect(plug)
        return plug

    def compute(self, **runs):
        summaries = [runs[name] for name in sorted(runs, key=_plug_order)]
        curves = [
            None
            if s["diverged"] and not s["curve"]["timesteps"]
            else LearningCurve.from_dict(s["curve"])
            for s in summaries
        ]
        result = aggregate(curves)
        write_json(os.path.join(self.out_dir, "aggregate.json"), result)
        export_csv(result, os.path.join(self.out_dir, "aggregate.csv"))
        return {"aggregate": result, "summaries": summaries}


def _plug_order(name):
    return int(name[len("run") :])


def write_manifest(spec, aggregate, summaries):
    """Write the experiment manifest.

    Returns:
        (dict): ``{"manifest": path}``.
    """
    diverged = [s["seed"] for s in summaries if s["diverged"]]
    final = [
        s["final_rolling"]
        for s in summaries
        if not math.isnan(s["final_rolling"])
    ]
    mean, stderr = mean_and_stderr(final)
    manifest = {
        "spec": spec,
        "version": __version__,
        "code_version": source_fingerprint(),
        "seeds": spec["seeds"],
        "config": ExperimentSpec.from_dict(spec).train_config().to_dict(),
        "diverged_seeds": diverged,
        "final_rolling": {"mean": mean, "stderr": stderr, "n": len(final)},
        "buckets": len(aggregate),
    }
    path = write_json(os.path.join(spec["out_dir"], MANIFEST), manifest)
    log.info("Wrote manifest %s", path)
    return {"manifest": path}


def build_experiment_graph(spec):
    """The graph of training, aggregate and manifest nodes of a spec."""
    graph = Graph(name=f"{spec.env}-{spec.kind.label}")
    data = spec.to_dict()
    aggregate_node = AggregateNode(spec.out_dir, graph=graph)
    manifest = FunctionNode(
        write_manifest, outputs=["manifest"], graph=graph, spec=data
    )
    for seed in spec.seeds:
        node = FunctionNode(
            train_seed,
            outputs=["summary"],
            name=f"train-s{seed}",
            metadata={"seed": seed},
            graph=graph,
            spec=data,
            seed=seed,
        )
        aggregate_node.add_run(node)
    aggregate_node.connect(manifest)
    for node in graph.nodes:
        node.events["evaluation-finished"].register(_log_finished)
    return graph


def _log_finished(node):
    log.info("%s finished in %.2fs", node.name, node.stats["eval_time"])


def _mode(workers):
    return "linear" if workers <= 1 else "multiprocessing"


@dataclasses.dataclass
class ExperimentResult:
    """What an experiment produced, also on disk under ``out_dir``."""

    spec: ExperimentSpec
    curves: dict
    aggregate: AggregateCurve
    diverged: list
    manifest: str

    @property
    def final_rolling(self):
        """Mean and standard error of the runs' final rolling returns."""
        return mean_and_stderr(
            [
                c.final_rolling()
                for c in self.curves.values()
                if len(c) and not math.isnan(c.final_rolling())
            ]
        )


def run_experiment(spec, workers=1, graph=None):
    """Train every seed of an experiment, aggregate and write a manifest.

    Args:
        spec (ExperimentSpec): The experiment.
        workers (int): 1 evaluates in this process, more use a process pool
            running seeds in parallel.
        graph (Graph): A prebuilt graph of ``spec``, e.g. one that was
            printed before.

    Returns:
        (ExperimentResult): Curves per seed, the aggregate and the seeds
            that diverged.
    """
    graph = graph or build_experiment_graph(spec)
    log.info(
        "Running %s with %s critic, seeds %s, into %s",
        spec.env,
        spec.kind,
        list(spec.seeds),
        spec.out_dir,
    )
    os.makedirs(spec.out_dir, exist_ok=True)
    graph.evaluate(mode=_mode(workers), max_workers=workers)
    aggregate_node = graph["aggregate"]
    summaries = aggregate_node.outputs["summaries"].value
    return ExperimentResult(
        spec=spec,
        curves={
            s["seed"]: LearningCurve.from_dict(s["curve"]) for s in summaries
        },
        aggregate=aggregate_node.outputs["aggregate"].value,
        diverged=[s["seed"] for s in summaries if s["diverged"]],
        manifest=graph["write_manifest"].outputs["manifest"].value,
    )


@dataclasses.dataclass(frozen=True)
class GridSearchSpec:
    """The hyperparameter sets searched over, one cell per combination."""

    actor_rates: tuple = ACTOR_RATES
    critic_rates: tuple = CRITIC_RATES
    lambdas: tuple = NEGENTROPY_WEIGHTS["heavenhell"]
    runs_per_cell: int = 1

    def __post_init__(self):
        for name in ("actor_rates", "critic_rates", "lambdas"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ConfigError(f"Grid set '{name}' is empty")
            object.__setattr__(self, name, values)
        if self.runs_per_cell < 1:
            raise ConfigError("runs_per_cell must be >= 1")

    def __len__(self):
        return (
            len(self.actor_rates) * len(self.critic_rates) * len(self.lambdas)
        )

    @classmethod
    def for_environment(cls, env, **changes):
        """The default grid of an environment family."""
        family = env.split("-", 1)[0]
        changes.setdefault(
            "lambdas",
            NEGENTROPY_WEIGHTS.get(family, NEGENTROPY_WEIGHTS["heavenhell"]),
        )
        return cls(**changes)

    def cells(self):
        """(lr_actor, lr_critic, lambda0) per cell."""
        return list(
            itertools.product(
                self.actor_rates, self.critic_rates, self.lambdas
            )
        )


@dataclasses.dataclass(frozen=True)
class CellResult:
    """The outcome of one grid cell."""

    lr_actor: float
    lr_critic: float
    lambda0: float
    mean: float
    stderr: float
    n_runs: int
    diverged: int = 0
    out_dir: str = ""

    def sort_key(self):
        """Best mean first, cells without a mean last; ties by lower rates."""
        missing = math.isnan(self.mean)
        return (
            missing,
            0.0 if missing else -self.mean,
            self.lr_actor,
            self.lr_critic,
            self.lambda0,
        )

    def row(self, rank):
        """A row of the ranking CSV."""
        return (
            rank,
            self.lr_actor,
            self.lr_critic,
            self.lambda0,
            self.mean,
            self.stderr,
            self.n_runs,
            self.diverged,
        )

    def to_dict(self):
        """Plain representation for json artifacts."""
        return dataclasses.asdict(self)


def rank_cells(cells):
    """Order cells by final rolling return, ties broken by lower actor rate.

    Returns:
        (list of CellResult): The best cell first.
    """
    return sorted(cells, key=CellResult.sort_key)


def cell_dir(out_dir, lr_actor, lr_critic, lambda0):
    """The output directory of a grid cell."""
    return os.path.join(
        out_dir, f"cell-a{lr_actor!r}-c{lr_critic!r}-l{lambda0!r}"
    )


def run_cell(spec, lr_actor, lr_critic, lambda0):
    """Run the experiment of one grid cell.

    Returns:
        (dict): ``{"cell": CellResult}``.
    """
    spec = ExperimentSpec.from_dict(spec)
    overrides = dict(
        spec.overrides,
        lr_actor=lr_actor,
        lr_critic=lr_critic,
        lambda0=lambda0,
    )
    out_dir = cell_dir(spec.out_dir, lr_actor, lr_critic, lambda0)
    log.info("Grid cell %s", out_dir)
    result = run_experiment(spec.replace(overrides=overrides, out_dir=out_dir))
    mean, stderr = result.final_rolling
    return {
        "cell": CellResult(
            lr_actor,
            lr_critic,
            lambda0,
            mean,
            stderr,
            len(spec.seeds),
            len(result.diverged),
            out_dir,
        )
    }


class RankingNode(INode):
    """Rank the results of all grid cells and write the ranking table."""

    def __init__(self, out_dir, name="ranking", graph=None):
        super().__init__(name=name, graph=graph)
        self.out_dir = out_dir
        OutputPlug("ranking", self)

    def add_cell(self, node):
        """Connect the result of a cell node to a new input."""
        plug = InputPlug(f"cell{len(self.inputs)}", self)
        node.outputs["cell"].connect(plug)
        return plug

    def compute(self, **cells):
        ranking = rank_cells(cells.values())
        export_csv(ranking, os.path.join(self.out_dir, RANKING))
        write_json(
            os.path.join(self.out_dir, "ranking.json"),
            [cell.to_dict() for cell in ranking],
        )
        return {"ranking": ranking}


def cell_seeds(seeds, runs_per_cell):
    """The seeds of every grid cell: ``seeds`` topped up to ``runs_per_cell``.

    Missing runs take the smallest non-negative integers not given yet.
    """
    seeds = list(seeds)
    if len(seeds) >= runs_per_cell:
        return tuple(seeds)
    given = len(seeds)
    candidate = 0
    while len(seeds) < runs_per_cell:
        if candidate not in seeds:
            seeds.append(candidate)
        candidate += 1
    log.warning(
        "%d seeds given for %d runs per cell, added seeds %s",
        given,
        runs_per_cell,
        seeds[given:],
    )
    return tuple(seeds)


def build_grid_graph(spec, grid):
    """The graph of one experiment node per cell and the ranking node."""
    graph = Graph(name=f"grid-{spec.env}-{spec.kind.label}")
    ranking = RankingNode(spec.out_dir, graph=graph)
    seeds = cell_seeds(spec.seeds, grid.runs_per_cell)
    data = spec.replace(seeds=seeds).to_dict()
    for i, (lr_actor, lr_critic, lambda0) in enumerate(grid.cells()):
        node = FunctionNode(
            run_cell,
            outputs=["cell"],
            name=f"cell-{i}",
            graph=graph,
            spec=data,
            lr_actor=lr_actor,
            lr_critic=lr_critic,
            lambda0=lambda0,
        )
        ranking.add_cell(node)
    return graph


def grid_search(spec, grid, workers=1, graph=None):
    """Run every cell of a grid and rank them.

    Args:
        spec (ExperimentSpec): The base experiment; its seeds are used per
            cell, topped up by :func:`cell_seeds` to ``runs_per_cell``, and
            its output directory holds one subdirectory per cell.
        grid (GridSearchSpec): The hyperparameter sets.
        workers (int): Cells evaluated in parallel.

    Returns:
        (list of CellResult): The ranking, best cell first.
    """
    graph = graph or build_grid_graph(spec, grid)
    log.info("Grid search over %d cells into %s", len(grid), spec.out_dir)
    os.makedirs(spec.out_dir, exist_ok=True)
    write_json(
        os.path.join(spec.out_dir, "grid.json"),
        {
            "spec": spec.to_dict(),
            "grid": dataclasses.asdict(grid),
            "version": __version__,
            "code_version": source_fingerprint(),
        },
    )
    graph.evaluate(mode=_mode(workers), max_workers=workers)
    return graph["ranking"].outputs["ranking"].value


def probe_checkpoint(path, env, n=None):
    """Critic outputs of a checkpoint on the Heaven-Hell fork probes.

    Args:
        path (str): An ``agent.npz`` written by an experiment.
        env (str): The Heaven-Hell environment the agent was trained on.
        n (int): Probe size override, defaults to the environment's.

    Returns:
        (ProbeLog): One record per probe at timestep 0.
    """
    probes = (
        heavenhell_fork_probes(n) if n is not None else probes_for(env)
    )
    if probes is None:
        raise ConfigError(f"No probes defined for environment '{env}'")
    pomdp, terminals = resolve_environment(env)
    nets, _, _ = load_agent(path)
    probe_log = ProbeLog()
    for name, value in probe_critic(nets, probes, pomdp, terminals):
        probe_log.record(0, name, nets.kind, value)
    return probe_log


def export_run_dir(out_dir):
    """Rewrite the CSVs of an experiment directory from its json artifacts.

    Returns:
        (list of str): The written CSV paths, in sorted order.
    """
    written = []
    for root, dirs, files in os.walk(out_dir):
        dirs.sort()
        for name in sorted(files):
            path = os.path.join(root, name)
            target = path[: -len(".json")] + ".csv"
            if name in ("curve.json",):
                with open(path, encoding="utf-8") as stream:
                    artifact = LearningCurve.from_dict(json.load(stream))
            elif name == "probes.json":
                with open(path, encoding="utf-8") as stream:
                    artifact = ProbeLog.from_dict(json.load(stream))
            elif name == "aggregate.json":
                with open(path, encoding="utf-8") as stream:
                    artifact = AggregateCurve.from_dict(json.load(stream))
            elif name == "ranking.json":
                with open(path, encoding="utf-8") as stream:
                    artifact = [CellResult(**c) for c in json.load(stream)]
            else:
                continue
            written.append(export_csv(artifact, target))
    if not written:
        log.warning("No artifacts found under %s", out_dir)
    return written
