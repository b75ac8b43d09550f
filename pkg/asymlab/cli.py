"""The ``asymlab`` command line.

::

    asymlab train --env heavenhell-3 --critic hs --seeds 0 1 2 --out runs/hh3
    asymlab grid --env goodbad --critic h --max-steps 2000 --workers 4
    asymlab verify all
    asymlab probe --checkpoint hh4/runs/seed-0/agent.npz --env heavenhell-4
    asymlab export --out runs/hh3
    asymlab validate-env --pomdp-file tiger.pomdp

Exit statuses: 0 success, 1 failed verification, diverged run or invalid
environment, 2 configuration error.
"""
import argparse
import json
import logging
import sys

from . import __version__
from .agent import ALL_KINDS, CriticKind
from .config import TRAIN_FIELDS, output_root, read_config_file
from .errors import (
    ConfigError,
    ContractViolationError,
    PomdpSemanticError,
)
from .harness import (
    ExperimentSpec,
    GridSearchSpec,
    build_experiment_graph,
    build_grid_graph,
    export_csv,
    export_run_dir,
    grid_search,
    probe_checkpoint,
    resolve_environment,
    run_experiment,
)
from .pomdp import validate
from .pomdpfile import dump_pomdp_file
from .utilities import ArtifactEncoder
from .verify import COMMANDS, all_passed
from .verify import run as run_verification

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

EXPERIMENT_FIELDS = {
    "env": "",
    "critic": "",
    "seeds": (0,),
    "out": "",
    "workers": 1,
    "pomdp_file": "",
}
GRID_FIELDS = {
    "actor_rates": (0.0,),
    "critic_rates": (0.0,),
    "lambdas": (0.0,),
    "runs_per_cell": 1,
}
CONFIG_SECTIONS = {
    "experiment": EXPERIMENT_FIELDS,
    "train": TRAIN_FIELDS,
    "grid": GRID_FIELDS,
}
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _add_experiment_arguments(parser):
    parser.add_argument("--config", help="INI file, flags take precedence")
    parser.add_argument("--env", help="registered environment name")
    parser.add_argument("--pomdp-file", help="train on a POMDP file")
    parser.add_argument(
        "--critic",
        choices=[kind.label for kind in ALL_KINDS],
        help="critic variant",
    )
    parser.add_argument("--seed", type=int, help="a single seed")
    parser.add_argument("--seeds", type=int, nargs="+", help="seeds")
    parser.add_argument(
        "--max-steps", type=int, help="training budget in timesteps"
    )
    parser.add_argument("--lr-actor", type=float)
    parser.add_argument("--lr-critic", type=float)
    parser.add_argument("--lambda0", type=float, help="negentropy weight")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel workers")
    parser.add_argument(
        "--show-graph",
        action="store_true",
        help="print the experiment graph before running",
    )


def build_parser():
    """The argument parser of all verbs."""
    parser = argparse.ArgumentParser(
        prog="asymlab",
        description="Asymmetric actor-critic experiments on tabular POMDPs.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for info, -vv for debug logging",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    train = verbs.add_parser("train", help="train one agent per seed")
    _add_experiment_arguments(train)

    grid = verbs.add_parser("grid", help="grid search over hyperparameters")
    _add_experiment_arguments(grid)
    grid.add_argument("--actor-rates", type=float, nargs="+")
    grid.add_argument("--critic-rates", type=float, nargs="+")
    grid.add_argument("--lambdas", type=float, nargs="+")

    verify = verbs.add_parser("verify", help="check exact identities")
    verify.add_argument("command", choices=list(COMMANDS) + ["all"])
    verify.add_argument("--json", action="store_true", help="json output")

    probe = verbs.add_parser("probe", help="critic outputs on fork probes")
    probe.add_argument("--checkpoint", required=True)
    probe.add_argument("--env", required=True)
    probe.add_argument("--out", help="CSV file, printed if omitted")

    export = verbs.add_parser("export", help="rewrite CSVs from artifacts")
    export.add_argument("--out", required=True, help="experiment directory")

    check = verbs.add_parser("validate-env", help="validate an environment")
    check.add_argument("--env")
    check.add_argument("--pomdp-file")
    check.add_argument("--export", help="write the environment as a file")
    return parser


def _config_file(args):
    if not getattr(args, "config", None):
        return {name: {} for name in CONFIG_SECTIONS}
    return read_config_file(args.config, CONFIG_SECTIONS)


def _first(*values):
    for value in values:
        if value not in (None, "", ()):
            return value
    return None


def experiment_spec(args, sections):
    """The ExperimentSpec of parsed flags over config file sections.

    Raises:
        ConfigError: If the combination does not describe an experiment.
    """
    experiment = sections["experiment"]
    env = _first(args.env, experiment.get("env"))
    pomdp_file = _first(args.pomdp_file, experiment.get("pomdp_file"))
    if pomdp_file and not env:
        env = str(pomdp_file).rsplit("/", 1)[-1]
    if not env:
        raise ConfigError("No environment given, use --env or --pomdp-file")
    critic = _first(args.critic, experiment.get("critic"), "hs")
    seeds = _first(
        tuple(args.seeds or ()),
        (args.seed,) if args.seed is not None else (),
        tuple(experiment.get("seeds", ())),
        (0,),
    )
    overrides = dict(sections["train"])
    for field, flag in (
        ("max_timesteps", args.max_steps),
        ("lr_actor", args.lr_actor),
        ("lr_critic", args.lr_critic),
        ("lambda0", args.lambda0),
    ):
        if flag is not None:
            overrides[field] = flag
    try:
        return ExperimentSpec(
            env=env,
            kind=CriticKind.parse(critic),
            seeds=seeds,
            out_dir=_first(args.out, experiment.get("out"), output_root()),
            overrides=overrides,
            pomdp_file=pomdp_file,
        )
    except ContractViolationError as exc:
        raise ConfigError(str(exc)) from exc


def _workers(args, sections):
    return int(
        _first(args.workers, sections["experiment"].get("workers"), 1)
    )


def _train(args):
    sections = _config_file(args)
    spec = experiment_spec(args, sections)
    graph = build_experiment_graph(spec)
    if args.show_graph:
        print(graph.node_repr())
    result = run_experiment(spec, _workers(args, sections), graph=graph)
    mean, stderr = result.final_rolling
    print(
        f"{spec.env} {spec.kind}: final rolling return {mean:.4f} "
        f"± {stderr:.4f} over {len(spec.seeds)} seeds, "
        f"manifest {result.manifest}"
    )
    if result.diverged:
        print(f"Diverged seeds: {result.diverged}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _grid(args):
    sections = _config_file(args)
    spec = experiment_spec(args, sections)
    changes = dict(sections["grid"])
    for name in ("actor_rates", "critic_rates", "lambdas"):
        if getattr(args, name):
            changes[name] = tuple(getattr(args, name))
    grid = GridSearchSpec.for_environment(spec.env, **changes)
    graph = build_grid_graph(spec, grid)
    if args.show_graph:
        print(graph.list_repr())
    ranking = grid_search(
        spec, grid, _workers(args, sections), graph=graph
    )
    for rank, cell in enumerate(ranking, 1):
        print(
            f"{rank:3d}  actor {cell.lr_actor:<8g} critic "
            f"{cell.lr_critic:<8g} lambda0 {cell.lambda0:<6g} "
            f"{cell.mean:.4f} ± {cell.stderr:.4f}"
        )
    return EXIT_OK


def _verify(args):
    reports = run_verification(args.command)
    if args.json:
        print(
            json.dumps(
                [report.to_dict() for report in reports],
                cls=ArtifactEncoder,
                indent=2,
            )
        )
    else:
        for report in reports:
            print(report)
    return EXIT_OK if all_passed(reports) else EXIT_FAILURE


def _probe(args):
    probe_log = probe_checkpoint(args.checkpoint, args.env)
    if args.out:
        export_csv(probe_log, args.out)
    for _, probe_id, kind, value in probe_log.rows():
        print(f"{probe_id:<28} {kind:<11} {value!r}")
    return EXIT_OK


def _export(args):
    for path in export_run_dir(args.out):
        print(path)
    return EXIT_OK


def _validate_env(args):
    pomdp, terminals = resolve_environment(args.env, args.pomdp_file)
    diagnostics = validate(pomdp, terminals)
    print(
        f"{pomdp.name}: {pomdp.n_states} states, {pomdp.n_actions} "
        f"actions, {pomdp.n_obs} observations, gamma {pomdp.gamma}"
    )
    for diagnostic in diagnostics:
        print(f"  {diagnostic}")
    if args.export:
        try:
            text = dump_pomdp_file(pomdp)
        except PomdpSemanticError as exc:
            raise ConfigError(f"Cannot export {pomdp.name}: {exc}") from exc
        if not terminals.is_empty:
            log.warning(
                "The file format drops the terminals of %s", pomdp.name
            )
        with open(args.export, "w", encoding="utf-8") as stream:
            stream.write(text)
    return EXIT_FAILURE if diagnostics else EXIT_OK


VERBS = {
    "train": _train,
    "grid": _grid,
    "verify": _verify,
    "probe": _probe,
    "export": _export,
    "validate-env": _validate_env,
}


def main(argv=None):
    """Run the command line and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS[min(args.verbose, len(LOG_LEVELS) - 1)],
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        return VERBS[args.verb](args)
    except ConfigError as exc:
        print(f"asymlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run():
    """Console script entry point."""
    sys.exit(main())
