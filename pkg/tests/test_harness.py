
import csv
import json
import os

import numpy as np
import pytest
import torch
import trimesh
from scipy.spatial.transform import Rotation

from fracmerge.agglomerator import assemble
from fracmerge.autoencoder_trainer import (AutoencoderTrainingConfig,
                                           fragment_clouds, train_autoencoder)
from fracmerge.denoise_transformer import DenoiseTransformer
from fracmerge.denoiser_trainer import DenoiserTrainingConfig, train_denoiser
from fracmerge.diffusion import DiffusionAlignmentSolver
from fracmerge.domain_error import DomainError
from fracmerge.experiment import (GRID_FILE, ITERATIONS_FILE, REPORT_FILE,
                                  STEPS_FILE, run_experiment,
                                  write_experiment, write_metrics)
from fracmerge.export import export_assembly, fragment_color, posed_assembly
from fracmerge.file_system_assembly_store import FileSystemAssemblyStore
from fracmerge.fragment_autoencoder import EncoderConfig
from fracmerge.generator import generate_dataset
from fracmerge.invalid_argument import InvalidArgument
from fracmerge.latent_matcher import LatentMatcher
from fracmerge.load_error import LoadError
from fracmerge.metrics import (AssemblyMetrics, MetricsReport,
                               align_by_anchor, assembly_chamfer,
                               evaluate_assembly, part_accuracy,
                               rmse_rotation, rmse_translation)
from fracmerge.pair_verifier import PairVerifier
from fracmerge.pipeline import (Models, assemble_all, evaluate_runs,
                                load_split, open_store)
from fracmerge.pose import Pose7, pose_compose
from fracmerge.preprocessing import prepare_test_sample
from fracmerge.run_config import (RunConfig, load_run_config,
                                  parse_run_config)
from fracmerge.verifier_trainer import (VerifierTrainingConfig,
                                        generate_verifier_examples,
                                        train_verifier, verifier_example)
from tests.builders import (ConstantScorer, IdentitySolver, OracleSolver,
                            tiny_denoiser_config, tiny_encoder,
                            tiny_verifier_config)


def _row(name, rmse_rot, rot_squared_sum, error_count):
    return AssemblyMetrics(name, error_count + 1, rmse_rot, 0.0, 50.0, 1.0,
                           rot_squared_sum, 0.0, error_count)


@pytest.fixture
def oracle_run(slabs, rng):
    sample = prepare_test_sample(slabs, rng)
    result = assemble(sample, OracleSolver(sample, 0), ConstantScorer(1.0),
                      rng=rng, anchor_id=0)
    return sample, result


def test_align_by_anchor_removes_the_global_frame(slabs, rng):
    gt = slabs.gt_poses()
    frame = Pose7.from_rotation(Rotation.random(random_state=rng),
                                rng.normal(size=3))
    aligned = align_by_anchor([pose_compose(frame, p) for p in gt], gt, 2)
    for expected, actual in zip(gt, aligned):
        assert actual.allclose(expected, atol=1e-9)
    with pytest.raises(DomainError):
        align_by_anchor(gt, gt, 4)


def test_part_accuracy_counts_placed_fragments(slabs):
    gt = slabs.gt_poses()
    pred = list(gt)
    pred[3] = pose_compose(Pose7(t=np.array([1.0, 0.0, 0.0])), gt[3])
    assert part_accuracy(pred, slabs.fragments) == 75.0
    assert part_accuracy(pred, slabs.fragments, exclude=0) == \
        pytest.approx(200 / 3)
    assert part_accuracy(gt[:1], slabs.fragments[:1], exclude=0) == 100.0


def test_rmse_of_quarter_turns(slabs):
    gt = slabs.gt_poses()
    quarter = Pose7.from_rotation(Rotation.from_euler("x", 90, degrees=True))
    pred = [gt[0]] + [pose_compose(pose, quarter) for pose in gt[1:]]
    assert rmse_rotation(pred, gt, exclude=0) == pytest.approx(90.0)
    assert rmse_rotation(pred, gt) == pytest.approx(np.sqrt(3 / 4) * 90.0)
    assert rmse_translation(pred, gt) == pytest.approx(0.0, abs=1e-12)


def test_assembly_chamfer_of_ground_truth(slabs):
    assert assembly_chamfer(slabs.gt_poses(), slabs.fragments) == \
        pytest.approx(0.0, abs=1e-12)


def test_evaluate_assembly_of_ground_truth(slabs):
    metrics = evaluate_assembly(slabs, slabs.gt_poses(), 0)
    assert metrics.part_accuracy == 100.0
    assert metrics.rmse_rot == pytest.approx(0.0, abs=1e-6)
    assert metrics.error_count == 3
    assert evaluate_assembly(slabs, slabs.gt_poses(), 0,
                             include_anchor=True).error_count == 4


def test_metrics_report_aggregations():
    rows = [_row("a", 10.0, 200.0, 2), _row("b", 0.0, 0.0, 2)]
    per_assembly = MetricsReport(list(rows))
    assert per_assembly.rmse_rot == pytest.approx(5.0)
    pooled = MetricsReport(list(rows), rmse_aggregation="fragment")
    assert pooled.rmse_rot == pytest.approx(np.sqrt(50.0))
    assert per_assembly.part_accuracy == 50.0
    assert per_assembly.summary()["assemblies"] == 2
    document = per_assembly.to_dict()
    assert document["rmse_aggregation"] == "assembly"
    assert [row["name"] for row in document["rows"]] == ["a", "b"]
    assert MetricsReport().summary()["rmse_rot"] == 0.0
    with pytest.raises(DomainError):
        MetricsReport(rmse_aggregation="median")


def test_parse_run_config():
    values = parse_run_config(
        "steps = 10\n"
        "# sweep settings\n"
        "shapes=cube,sphere\n"
        "include_anchor=true\n"
        "limit=none\n"
        "threshold=0.8  # stricter\n")
    assert values == {"steps": 10, "shapes": ("cube", "sphere"),
                      "include_anchor": True, "limit": None,
                      "threshold": 0.8}


def test_parse_run_config_errors():
    with pytest.raises(InvalidArgument):
        parse_run_config("stepz=10")
    with pytest.raises(InvalidArgument):
        parse_run_config("steps")
    with pytest.raises(InvalidArgument):
        parse_run_config("steps=ten")


def test_load_run_config_layers_overrides(tmp_path):
    path = str(tmp_path / "run.cfg")
    with open(path, "w") as file:
        file.write("steps=10\nseed=3\n")
    config = load_run_config(path, steps=5, seed=None)
    assert config.steps == 5
    assert config.seed == 3
    assert config.iterations == RunConfig().iterations
    with pytest.raises(InvalidArgument):
        load_run_config(str(tmp_path / "missing.cfg"))
    with pytest.raises(InvalidArgument):
        RunConfig().with_overrides(stepz=1)


def test_run_config_builds_component_configs():
    config = RunConfig(checkpoint_dir="ckpt", verifier_hidden_size=64)
    assert config.denoiser_path == os.path.join("ckpt", "denoiser.ckpt")
    assert config.verifier_config().index_encoding_size == 32
    assert config.assembly_config().merge_threshold == config.threshold
    assert config.denoiser_config().schedule().num_timesteps == 1000


def test_fragment_colors():
    assert not np.array_equal(fragment_color(0), fragment_color(1))
    assert np.array_equal(fragment_color(0), fragment_color(20))
    assert fragment_color(3).dtype == np.uint8


def test_posed_assembly_colors_each_fragment(slabs):
    cloud = posed_assembly(slabs, slabs.gt_poses())
    assert len(cloud.vertices) == 4000
    assert np.array_equal(cloud.colors[0], fragment_color(0))
    assert np.array_equal(cloud.colors[3999], fragment_color(3))


def test_export_assembly(oracle_run, tmp_path):
    sample, result = oracle_run
    output_dir = str(tmp_path / "export")
    paths = export_assembly(sample, result, output_dir)
    assert len(paths) == len(result.iterations) + 1
    for path in paths[:-1]:
        assert len(trimesh.load(path).vertices) == 4000
    with open(paths[-1]) as file:
        document = json.load(file)
    assert document["anchor_id"] == 0
    assert [merge["kind"] for merge in document["merges"]] == \
        ["anchor", "union", "anchor"]
    assert len(document["iterations"]) == 2
    with pytest.raises(DomainError):
        export_assembly(sample, result, output_dir, format="obj")


def test_write_metrics(oracle_run, tmp_path):
    sample, result = oracle_run
    report = MetricsReport()
    report.add(evaluate_assembly(sample, result.poses, result.anchor_id))
    rows_path, report_path = write_metrics(report, str(tmp_path))
    with open(rows_path) as file:
        rows = list(csv.DictReader(file))
    assert len(rows) == 1
    assert float(rows[0]["part_accuracy"]) == 100.0
    with open(report_path) as file:
        assert json.load(file)["summary"]["assemblies"] == 1


def test_assemble_all_is_reproducible(slabs, three_slabs):
    first = assemble_all([slabs, three_slabs], IdentitySolver(),
                         ConstantScorer(0.0), seed=4)
    second = assemble_all([slabs, three_slabs], IdentitySolver(),
                          ConstantScorer(0.0), seed=4)
    assert len(first) == 2
    for a, b in zip(first, second):
        for fa, fb in zip(a.sample.fragments, b.sample.fragments):
            assert np.array_equal(fa.points, fb.points)
    report = evaluate_runs(first, iteration=1)
    assert len(report.rows) == 2
    assert [row.name for row in report.rows] == [slabs.name, three_slabs.name]


def test_open_store_and_load_split(tmp_path, three_slabs):
    root = str(tmp_path)
    with pytest.raises(InvalidArgument):
        open_store(RunConfig(dataset="meshes"))
    with pytest.raises(InvalidArgument):
        open_store(RunConfig(dataset="breaking_bad"))
    with pytest.raises(LoadError):
        load_split(RunConfig(data_root=root), "test")
    FileSystemAssemblyStore(root).put_assembly(three_slabs)
    loaded = load_split(RunConfig(data_root=root, limit=1), "test")
    assert [a.name for a in loaded] == [three_slabs.name]


def test_experiment_sweep(three_slabs, tmp_path):
    torch.manual_seed(0)
    models = Models(tiny_encoder(),
                    DenoiseTransformer(tiny_denoiser_config()),
                    PairVerifier(tiny_verifier_config()))
    config = RunConfig(steps=2, iterations=2, step_sweep=(1,),
                       iteration_sweep=(1,))
    result = run_experiment(config, [three_slabs], models)
    assert [(c.steps, c.iterations) for c in result.cells] == \
        [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert result.headline() is result.reports[(2, 2)]
    assert len(result.iteration_table()) == 2
    assert len(result.step_table()) == 2
    paths = write_experiment(result, str(tmp_path))
    names = [os.path.basename(path) for path in paths]
    assert names == [GRID_FILE, ITERATIONS_FILE, STEPS_FILE, REPORT_FILE]
    with open(paths[0]) as file:
        assert len(list(csv.DictReader(file))) == 4


@pytest.fixture(scope="module")
def trained_sweep():
    """A steps and iterations sweep of models trained briefly on generated
    cubes."""
    torch.manual_seed(0)
    assemblies = generate_dataset(["cube"], 2, 4, count=16, seed=0)
    autoencoder = train_autoencoder(
        fragment_clouds(assemblies), AutoencoderTrainingConfig(epochs=20),
        EncoderConfig(num_codes=32))
    encoder = autoencoder.frozen()
    denoiser = train_denoiser(
        assemblies, encoder, DenoiserTrainingConfig(epochs=200, batch_size=8),
        tiny_denoiser_config()).model
    examples = generate_verifier_examples(
        assemblies, DiffusionAlignmentSolver(denoiser, encoder, 20),
        LatentMatcher(encoder), np.random.default_rng(0))
    turn = Pose7.from_rotation(Rotation.from_euler("z", 30, degrees=True))
    for assembly in assemblies:
        poses = assembly.gt_poses()
        poses[-1] = pose_compose(poses[-1], turn)
        examples.append(verifier_example(assembly, poses,
                                         LatentMatcher(encoder)))
    verifier = train_verifier(
        examples, VerifierTrainingConfig(epochs=50, batch_size=8),
        tiny_verifier_config()).model
    config = RunConfig(steps=20, iterations=6, step_sweep=(5, 20),
                       iteration_sweep=(1, 6))
    models = Models(encoder, denoiser, verifier)
    result = run_experiment(config, assemblies[:8], models)
    return {(c.steps, c.iterations): c for c in result.cells}, models, \
        assemblies[:8]


@pytest.mark.slow
def test_more_iterations_do_not_lose_fragments(trained_sweep):
    cells, models, assemblies = trained_sweep
    for steps in (5, 20):
        assert cells[(steps, 6)].part_accuracy >= \
            cells[(steps, 1)].part_accuracy
    rng = np.random.default_rng(0)
    for assembly in assemblies:
        sample = prepare_test_sample(assembly, rng)
        result = assemble(sample, models.solver(5), models.scorer(), rng=rng)
        counts = [len(sample)] + [r.group_count for r in result.iterations]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


@pytest.mark.slow
def test_more_steps_cost_more_and_place_no_fewer(trained_sweep):
    cells = trained_sweep[0]
    assert cells[(20, 6)].part_accuracy >= cells[(5, 6)].part_accuracy
    assert cells[(20, 1)].ms_per_sample > cells[(5, 1)].ms_per_sample
