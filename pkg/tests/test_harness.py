import json
import math
import os

import mock
import pytest

from asymlab.agent import HISTORY, HISTORY_STATE, load_agent
from asymlab.envs import build_goodbad
from asymlab.errors import ConfigError, TrainingDivergenceError
from asymlab.harness import (
    MANIFEST,
    RANKING,
    AggregateCurve,
    CellResult,
    ExperimentSpec,
    GridSearchSpec,
    aggregate,
    bucket_values,
    build_experiment_graph,
    build_grid_graph,
    cell_dir,
    cell_seeds,
    export_csv,
    export_run_dir,
    grid_search,
    mean_and_stderr,
    probe_checkpoint,
    rank_cells,
    resolve_environment,
    run_dir,
    run_experiment,
    train_seed,
    write_csv,
)
from asymlab.pomdpfile import dump_pomdp_file
from asymlab.trainer import LearningCurve, ProbeLog

TINY = {
    "max_timesteps": 40,
    "max_episode_steps": 10,
    "target_update_period": 20,
    "embedding_size": 4,
    "hidden_size": 5,
    "mlp_sizes": (6,),
}


@pytest.fixture
def tiny_spec(tmpdir):
    """A two seed goodbad experiment that trains for a few episodes."""
    return ExperimentSpec(
        "goodbad",
        HISTORY,
        seeds=(0, 1),
        out_dir=str(tmpdir.join("experiment")),
        overrides=dict(TINY),
    )


def _read(path):
    with open(path, encoding="utf-8") as stream:
        return stream.read()


def test_mean_and_stderr():
    assert all(math.isnan(v) for v in mean_and_stderr([]))
    mean, stderr = mean_and_stderr([3.0])
    assert mean == 3.0
    assert math.isnan(stderr)
    mean, stderr = mean_and_stderr([1.0, 2.0, 3.0])
    assert mean == pytest.approx(2.0)
    assert stderr == pytest.approx(1 / math.sqrt(3))


def test_bucket_values():
    curve = LearningCurve([500, 1000, 1500, 2600], [1.0, 3.0, 5.0, 7.0])
    assert bucket_values(curve) == {1000: 2.0, 2000: 3.0, 3000: 4.0}
    assert bucket_values(curve, bucket_size=2000) == {2000: 3.0, 4000: 4.0}


def test_aggregate_counts_the_runs_per_bucket():
    short = LearningCurve([400, 900], [2.0, 4.0])
    long = LearningCurve([600, 1700], [4.0, 6.0])
    result = aggregate([short, None, long])
    assert result.timesteps == (1000, 2000)
    mean, stderr, count = result.at(1000)
    assert (mean, count) == (pytest.approx(3.5), 2)
    assert stderr == pytest.approx(0.5)
    mean, stderr, count = result.at(2000)
    assert (mean, count) == (5.0, 1)
    assert math.isnan(stderr)
    assert AggregateCurve.from_dict(result.to_dict()) == result
    assert len(aggregate([])) == 0


def test_export_learning_curve(tmpdir):
    path = str(tmpdir.join("curve.csv"))
    export_csv(LearningCurve([3, 7], [0.1, 1.0]), path)
    assert _read(path) == (
        "timestep,episode,return,rolling100\n"
        "3,0,0.1,0.1\n"
        "7,1,1.0,0.55\n"
    )
    with pytest.raises(TypeError):
        export_csv({"not": "an artifact"}, path)


def test_export_probes_and_ranking(tmpdir):
    probes = ProbeLog()
    probes.record(0, "heaven-left-priest", HISTORY_STATE, -0.25)
    path = export_csv(probes, str(tmpdir.join("probes.csv")))
    assert _read(path).splitlines()[1] == "0,heaven-left-priest,hs,-0.25"
    cells = [CellResult(0.001, 0.001, 0.1, 2.5, math.nan, 1)]
    path = export_csv(cells, str(tmpdir.join("ranking.csv")))
    assert _read(path).splitlines() == [
        "rank,lr_actor,lr_critic,lambda0,mean,stderr,n_runs,diverged",
        "1,0.001,0.001,0.1,2.5,nan,1,0",
    ]


def test_write_csv_creates_directories(tmpdir):
    path = str(tmpdir.join("a", "b", "rows.csv"))
    write_csv(path, ("x", "y"), [(1, 1 / 3)])
    assert _read(path) == "x,y\n1,0.3333333333333333\n"


def test_resolve_environment(tmpdir):
    pomdp, terminals = resolve_environment("goodbad")
    assert pomdp.n_states == 2
    assert terminals.is_empty
    path = tmpdir.join("goodbad.pomdp")
    path.write(dump_pomdp_file(build_goodbad()[0]))
    loaded, _ = resolve_environment(pomdp_file=str(path))
    assert loaded.transition.tolist() == pomdp.transition.tolist()
    with pytest.raises(ConfigError, match="Unknown environment"):
        resolve_environment("tiger")
    with pytest.raises(ConfigError, match="Cannot load"):
        resolve_environment(pomdp_file=str(tmpdir.join("missing.pomdp")))
    path.write("discount: 2.0\n")
    with pytest.raises(ConfigError, match="Cannot load"):
        resolve_environment(pomdp_file=str(path))
    with pytest.raises(ConfigError):
        resolve_environment()


def test_experiment_spec(tmpdir):
    spec = ExperimentSpec(
        "heavenhell-4",
        "h",
        seeds=[2, 3],
        out_dir=str(tmpdir),
        overrides={"max_timesteps": 10, "mlp_sizes": (8, 8)},
    )
    assert spec.kind == HISTORY
    assert spec.seeds == (2, 3)
    config = spec.train_config()
    assert (config.lr_actor, config.lr_critic, config.lambda0) == (
        0.001,
        0.0003,
        0.3,
    )
    assert config.max_timesteps == 10
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec
    assert json.loads(json.dumps(spec.to_dict()))["overrides"] == {
        "max_timesteps": 10,
        "mlp_sizes": [8, 8],
    }


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"env": "tiger"}, "Unknown environment"),
        ({"seeds": ()}, "at least one seed"),
        ({"seeds": (1, 1)}, "Duplicate seeds"),
        ({"overrides": {"gamma": 0.5}}, "Unknown TrainConfig"),
        ({"overrides": {"lr_actor": 0.0}}, "learning rates"),
    ],
)
def test_invalid_experiment_specs(tmpdir, kwargs, match):
    arguments = {"env": "goodbad", "kind": "h", "out_dir": str(tmpdir)}
    arguments.update(kwargs)
    with pytest.raises(ConfigError, match=match):
        ExperimentSpec(**arguments)


def test_experiment_graph(tiny_spec):
    graph = build_experiment_graph(tiny_spec)
    assert graph.name == "goodbad-h"
    assert [n.name for n in graph.evaluation_matrix[0]] == [
        "train-s0",
        "train-s1",
    ]
    assert [n.name for n in graph.evaluation_sequence[2:]] == [
        "aggregate",
        "write_manifest",
    ]
    assert graph["train-s1"].metadata == {"seed": 1}
    assert "train-s0" in str(graph)


def test_run_experiment(tiny_spec):
    result = run_experiment(tiny_spec)
    assert sorted(result.curves) == [0, 1]
    assert result.diverged == []
    assert result.curves[0].timesteps == [10, 20, 30, 40]
    assert result.aggregate.timesteps == (1000,)
    assert result.aggregate.counts == (2,)
    out = tiny_spec.out_dir
    for seed in (0, 1):
        directory = run_dir(out, seed)
        for name in ("curve.csv", "curve.json", "agent.npz"):
            assert os.path.exists(os.path.join(directory, name))
        # goodbad has no probes
        assert not os.path.exists(os.path.join(directory, "probes.csv"))
    manifest = json.loads(_read(os.path.join(out, MANIFEST)))
    assert manifest["seeds"] == [0, 1]
    assert manifest["diverged_seeds"] == []
    assert manifest["config"]["max_timesteps"] == 40
    assert manifest["final_rolling"]["n"] == 2
    assert len(manifest["code_version"]) == 64
    assert ExperimentSpec.from_manifest(out) == tiny_spec
    assert result.final_rolling[0] == pytest.approx(
        manifest["final_rolling"]["mean"]
    )


def test_train_seed_saves_a_loadable_checkpoint(tiny_spec):
    summary = train_seed(tiny_spec.to_dict(), 0)["summary"]
    assert not summary["diverged"]
    path = os.path.join(run_dir(tiny_spec.out_dir, 0), "agent.npz")
    nets, optimizers, meta = load_agent(path)
    assert meta["seed"] == 0
    assert meta["env"] == "goodbad"
    assert nets.kind == HISTORY
    actor_optimizer, critic_optimizer = optimizers
    config = tiny_spec.train_config()
    assert actor_optimizer.lr == config.lr_actor
    assert critic_optimizer.lr == config.lr_critic
    assert actor_optimizer.state.step > 0
    assert critic_optimizer.state.step == actor_optimizer.state.step
    assert any(
        (moment != 0).any() for moment in critic_optimizer.state.second
    )


def test_experiments_are_reproducible(tiny_spec, tmpdir):
    first = run_experiment(tiny_spec)
    again = run_experiment(
        tiny_spec.replace(out_dir=str(tmpdir.join("again")))
    )
    assert first.curves == again.curves
    assert first.aggregate == again.aggregate


def test_workers_do_not_change_the_results(tiny_spec, tmpdir):
    linear = run_experiment(tiny_spec)
    parallel = run_experiment(
        tiny_spec.replace(out_dir=str(tmpdir.join("parallel"))), workers=2
    )
    assert linear.curves == parallel.curves


def test_a_diverged_seed_is_reported(tiny_spec):
    error = TrainingDivergenceError(
        "Non-finite loss", {"critic_loss": "nan"}, LearningCurve([10], [1.0])
    )
    with mock.patch("asymlab.harness.train", side_effect=error):
        result = run_experiment(tiny_spec.replace(seeds=(0,)))
    assert result.diverged == [0]
    assert result.curves[0].timesteps == [10]
    directory = run_dir(tiny_spec.out_dir, 0)
    assert json.loads(_read(os.path.join(directory, "divergence.json"))) == {
        "critic_loss": "nan"
    }
    assert not os.path.exists(os.path.join(directory, "agent.npz"))
    manifest = json.loads(_read(os.path.join(tiny_spec.out_dir, MANIFEST)))
    assert manifest["diverged_seeds"] == [0]


def test_heavenhell_experiments_record_probes(tmpdir):
    spec = ExperimentSpec(
        "heavenhell-3",
        HISTORY_STATE,
        out_dir=str(tmpdir),
        overrides=dict(TINY, probe_period=20),
    )
    run_experiment(spec)
    directory = run_dir(str(tmpdir), 0)
    rows = _read(os.path.join(directory, "probes.csv")).splitlines()
    assert rows[0] == "timestep,probe_id,kind,value"
    # four probes per recording, at least at the start and at the end
    records = [line.split(",") for line in rows[1:]]
    assert len(records) % 4 == 0 and len(records) >= 8
    assert records[0][0] == "0"
    checkpoint = os.path.join(directory, "agent.npz")
    probe_log = probe_checkpoint(checkpoint, "heavenhell-3")
    assert len(probe_log.rows()) == 4
    final = {row[1]: row[3] for row in records[-4:]}
    for _, probe_id, _, value in probe_log.rows():
        assert value == pytest.approx(float(final[probe_id]))
    with pytest.raises(ConfigError):
        probe_checkpoint(checkpoint, "goodbad")


def test_export_run_dir_rewrites_the_csvs(tiny_spec):
    run_experiment(tiny_spec)
    curve_csv = os.path.join(run_dir(tiny_spec.out_dir, 1), "curve.csv")
    expected = _read(curve_csv)
    os.remove(curve_csv)
    written = export_run_dir(tiny_spec.out_dir)
    assert curve_csv in written
    assert os.path.join(tiny_spec.out_dir, "aggregate.csv") in written
    assert _read(curve_csv) == expected


def test_export_an_empty_directory(tmpdir):
    assert export_run_dir(str(tmpdir)) == []


def test_grid_search_spec():
    grid = GridSearchSpec.for_environment("shopping-5")
    assert grid.lambdas == (0.3, 1.0, 3.0, 10.0, 30.0)
    assert len(grid) == 45
    assert grid.cells()[0] == (0.0001, 0.0001, 0.3)
    assert GridSearchSpec.for_environment("goodbad").lambdas == (
        GridSearchSpec().lambdas
    )
    with pytest.raises(ConfigError):
        GridSearchSpec(actor_rates=())
    with pytest.raises(ConfigError):
        GridSearchSpec(runs_per_cell=0)


def test_rank_cells():
    cells = [
        CellResult(0.001, 0.001, 0.1, 5.0, 0.1, 2),
        CellResult(0.0003, 0.001, 0.1, math.nan, math.nan, 2, 2),
        CellResult(0.0001, 0.001, 0.1, 5.0, 0.2, 2),
        CellResult(0.001, 0.0001, 1.0, 7.0, 0.3, 2),
    ]
    ranking = rank_cells(cells)
    assert [(c.lr_actor, c.lr_critic) for c in ranking] == [
        (0.001, 0.0001),
        (0.0001, 0.001),
        (0.001, 0.001),
        (0.0003, 0.001),
    ]


def test_cell_seeds_keep_the_given_seeds():
    assert cell_seeds((7, 3), 2) == (7, 3)
    assert cell_seeds((7, 3, 9), 2) == (7, 3, 9)
    with mock.patch("asymlab.harness.log") as log:
        assert cell_seeds((1, 7), 4) == (1, 7, 0, 2)
    log.warning.assert_called_once()


def test_grid_cells_extend_too_few_seeds(tiny_spec):
    grid = GridSearchSpec(
        actor_rates=(0.001,),
        critic_rates=(0.001,),
        lambdas=(0.1,),
        runs_per_cell=3,
    )
    graph = build_grid_graph(tiny_spec.replace(seeds=(5,)), grid)
    assert graph["cell-0"].inputs["spec"].value["seeds"] == [5, 0, 1]


def test_grid_search(tiny_spec):
    grid = GridSearchSpec(
        actor_rates=(0.001,),
        critic_rates=(0.001,),
        lambdas=(0.1, 1.0),
        runs_per_cell=1,
    )
    graph = build_grid_graph(tiny_spec.replace(seeds=(0,)), grid)
    assert sorted(n.name for n in graph.nodes) == [
        "cell-0",
        "cell-1",
        "ranking",
    ]
    ranking = grid_search(tiny_spec.replace(seeds=(0,)), grid)
    assert len(ranking) == 2
    assert {cell.lambda0 for cell in ranking} == {0.1, 1.0}
    assert ranking == rank_cells(ranking)
    out = tiny_spec.out_dir
    lines = _read(os.path.join(out, RANKING)).splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("1,0.001,0.001,")
    for cell in ranking:
        assert cell.out_dir == cell_dir(out, 0.001, 0.001, cell.lambda0)
        assert os.path.exists(os.path.join(cell.out_dir, MANIFEST))
        assert cell.n_runs == 1
    assert os.path.exists(os.path.join(out, "grid.json"))
