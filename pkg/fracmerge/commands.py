
import json
import logging
import os
from typing import Optional

import numpy as np

from fracmerge.autoencoder_trainer import (AutoencoderTrainingResult,
                                           fragment_clouds, train_autoencoder)
from fracmerge.command import command
from fracmerge.denoise_transformer import DenoiseTransformer
from fracmerge.denoiser_trainer import DenoiserTrainingResult, train_denoiser
from fracmerge.diffusion import DiffusionAlignmentSolver
from fracmerge.domain_error import DomainError
from fracmerge.experiment import (ExperimentCell, ExperimentResult,
                                  run_experiment, write_experiment,
                                  write_metrics)
from fracmerge.export import EXPORT_FORMATS, export_assembly
from fracmerge.file_system_assembly_store import FileSystemAssemblyStore
from fracmerge.fragment_autoencoder import FrozenEncoder
from fracmerge.fragment_record import TRAIN_SPLIT, AssemblySample
from fracmerge.generator import generate_dataset
from fracmerge.latent_matcher import LatentMatcher
from fracmerge.metrics import MetricsReport
from fracmerge.pipeline import (AssemblyRun, assemble_all, evaluate_runs,
                                load_models, load_split)
from fracmerge.run_config import RunConfig, load_run_config
from fracmerge.verifier_trainer import (VerifierTrainingResult,
                                        generate_verifier_examples,
                                        train_verifier)

logger = logging.getLogger(__name__)

RESULTS_FILE = "assemblies.json"


def _print_report(report: MetricsReport) -> None:
    print(f"{'assembly':<40}{'F':>4}{'RMSE(R)':>10}{'RMSE(T)':>10}" +
          f"{'PA':>8}{'CD':>10}")
    for row in report.rows:
        print(f"{row.name:<40}{row.fragment_count:>4}{row.rmse_rot:>10.2f}" +
              f"{row.rmse_trans:>10.2f}{row.part_accuracy:>8.1f}" +
              f"{row.chamfer:>10.3f}")
    print(f"{'mean':<44}{report.rmse_rot:>10.2f}{report.rmse_trans:>10.2f}" +
          f"{report.part_accuracy:>8.1f}{report.chamfer:>10.3f}")


def _print_cells(title: str, cells: list[ExperimentCell]) -> None:
    print(title)
    print(f"{'steps':>6}{'#ite':>6}{'RMSE(R)':>10}{'RMSE(T)':>10}{'PA':>8}" +
          f"{'CD':>10}{'ms':>10}")
    for cell in cells:
        print(f"{cell.steps:>6}{cell.iterations:>6}{cell.rmse_rot:>10.2f}" +
              f"{cell.rmse_trans:>10.2f}{cell.part_accuracy:>8.1f}" +
              f"{cell.chamfer:>10.3f}{cell.ms_per_sample:>10.1f}")


def _assemble(run: RunConfig) -> list[AssemblyRun]:
    models = load_models(run)
    assemblies = load_split(run, run.split)
    return assemble_all(assemblies, models.solver(run.steps), models.scorer(),
                        run.assembly_config(), run.seed)


@command("gen")
def gen(config: Optional[str] = None, data_root: Optional[str] = None,
        count: Optional[int] = None, min_frags: Optional[int] = None,
        max_frags: Optional[int] = None,
        shapes: Optional[tuple[str, ...]] = None,
        seed: Optional[int] = None) -> list[AssemblySample]:
    """Generate a synthetic fracture dataset.

    Fractures primitive shapes (cube, sphere, cylinder, torus) or mesh files
    given in --shapes (comma-separated) into 2-20 Voronoi pieces each and
    writes the assemblies, split 80/20 by object, under --data-root.
    """
    run = load_run_config(config, data_root=data_root, count=count,
                          min_frags=min_frags, max_frags=max_frags,
                          shapes=shapes, seed=seed)
    store = FileSystemAssemblyStore(run.data_root)
    assemblies = generate_dataset(run.shapes, run.min_frags, run.max_frags,
                                  run.count, run.seed, store)
    print(f"Wrote {len(assemblies)} assemblies to {run.data_root}")
    return assemblies


@command("train-ae")
def train_ae(config: Optional[str] = None, data_root: Optional[str] = None,
             checkpoint_dir: Optional[str] = None,
             epochs: Optional[int] = None, seed: Optional[int] = None,
             device: Optional[str] = None) -> AutoencoderTrainingResult:
    """Train the fragment autoencoder on the fragments of the train split."""
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir, ae_epochs=epochs,
                          seed=seed, device=device)
    clouds = fragment_clouds(load_split(run, TRAIN_SPLIT))
    result = train_autoencoder(clouds, run.autoencoder_training(),
                               run.encoder_config(), run.autoencoder_path)
    print(f"Saved {run.autoencoder_path}: chamfer " +
          f"{result.epoch_chamfer[-1]:.6f}, codebook usage " +
          f"{result.codebook_usage:.1%}")
    return result


@command("train-denoiser")
def train_denoiser_command(config: Optional[str] = None,
                           data_root: Optional[str] = None,
                           checkpoint_dir: Optional[str] = None,
                           epochs: Optional[int] = None,
                           seed: Optional[int] = None,
                           device: Optional[str] = None
                           ) -> DenoiserTrainingResult:
    """Train the pose denoiser on the train split with the frozen encoder."""
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir, epochs=epochs,
                          seed=seed, device=device)
    encoder = FrozenEncoder.load(run.autoencoder_path, run.device)
    result = train_denoiser(load_split(run, TRAIN_SPLIT), encoder,
                            run.denoiser_training(), run.denoiser_config(),
                            run.denoiser_path)
    print(f"Saved {run.denoiser_path}: loss {result.epoch_loss[-1]:.6f} " +
          f"after {result.steps} steps")
    return result


@command("train-verifier")
def train_verifier_command(config: Optional[str] = None,
                           data_root: Optional[str] = None,
                           checkpoint_dir: Optional[str] = None,
                           epochs: Optional[int] = None,
                           steps: Optional[int] = None,
                           seed: Optional[int] = None,
                           device: Optional[str] = None
                           ) -> VerifierTrainingResult:
    """Train the pair verifier on denoiser outputs over the train split.

    Every train assembly is assembled once by the trained denoiser and each
    fragment pair is labelled correct when its relative pose is within the
    rotation and translation thresholds of the ground truth.
    """
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir,
                          verifier_epochs=epochs, steps=steps, seed=seed,
                          device=device)
    encoder = FrozenEncoder.load(run.autoencoder_path, run.device)
    denoiser, _ = DenoiseTransformer.load(run.denoiser_path)
    examples = generate_verifier_examples(
        load_split(run, TRAIN_SPLIT),
        DiffusionAlignmentSolver(denoiser, encoder, run.steps),
        LatentMatcher(encoder), np.random.default_rng(run.seed),
        run.rotation_threshold, run.translation_threshold)
    result = train_verifier(examples, run.verifier_training(),
                            run.verifier_config(), run.verifier_path)
    auc = "n/a" if result.held_out_auc is None else \
        f"{result.held_out_auc:.3f}"
    print(f"Saved {run.verifier_path}: {result.positive_fraction:.1%} " +
          f"positive pairs, held-out AUC {auc}")
    return result


@command("assemble")
def assemble_command(config: Optional[str] = None,
                     data_root: Optional[str] = None,
                     checkpoint_dir: Optional[str] = None,
                     output_dir: Optional[str] = None,
                     split: Optional[str] = None,
                     steps: Optional[int] = None,
                     iterations: Optional[int] = None,
                     threshold: Optional[float] = None,
                     limit: Optional[int] = None,
                     seed: Optional[int] = None,
                     device: Optional[str] = None) -> list[AssemblyRun]:
    """Assemble every assembly of a split and save the predicted poses.

    Writes one JSON document with the final pose of every fragment and the
    merge log of every assembly to --output-dir.
    """
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir,
                          output_dir=output_dir, split=split, steps=steps,
                          iterations=iterations, threshold=threshold,
                          limit=limit, seed=seed, device=device)
    runs = _assemble(run)
    documents = [{
        "assembly": assembly_run.sample.name,
        "anchor_id": assembly_run.result.anchor_id,
        "poses": [pose.to_vector().tolist()
                  for pose in assembly_run.result.poses],
        "merges": [[record.iteration, list(record.pair), record.score,
                    record.result, record.kind]
                   for record in assembly_run.result.provenance],
        "iterations": len(assembly_run.result.iterations),
        "seconds": assembly_run.seconds} for assembly_run in runs]
    os.makedirs(run.output_dir, exist_ok=True)
    path = os.path.join(run.output_dir, RESULTS_FILE)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(documents, file, indent=2)
    for document in documents:
        print(f"{document['assembly']}: {len(document['merges'])} merges " +
              f"in {document['iterations']} iterations")
    print(f"Wrote {path}")
    return runs


@command("eval")
def eval_command(config: Optional[str] = None,
                 data_root: Optional[str] = None,
                 checkpoint_dir: Optional[str] = None,
                 output_dir: Optional[str] = None,
                 split: Optional[str] = None,
                 steps: Optional[int] = None,
                 iterations: Optional[int] = None,
                 threshold: Optional[float] = None,
                 include_anchor: Optional[bool] = None,
                 rmse_aggregation: Optional[str] = None,
                 limit: Optional[int] = None,
                 seed: Optional[int] = None,
                 device: Optional[str] = None) -> MetricsReport:
    """Assemble a split and report RMSE(R) in degrees, RMSE(T) x 1e-2, part
    accuracy in percent and Chamfer distance x 1e-3.

    Any split present in the store can be evaluated, e.g. a held-out subset
    of another category.
    """
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir,
                          output_dir=output_dir, split=split, steps=steps,
                          iterations=iterations, threshold=threshold,
                          include_anchor=include_anchor,
                          rmse_aggregation=rmse_aggregation, limit=limit,
                          seed=seed, device=device)
    report = evaluate_runs(_assemble(run), None, run.include_anchor,
                           run.rmse_aggregation)
    _print_report(report)
    for path in write_metrics(report, run.output_dir):
        print(f"Wrote {path}")
    return report


@command("experiment")
def experiment(config: Optional[str] = None,
               data_root: Optional[str] = None,
               checkpoint_dir: Optional[str] = None,
               output_dir: Optional[str] = None,
               split: Optional[str] = None,
               iteration_sweep: Optional[tuple[int, ...]] = None,
               step_sweep: Optional[tuple[int, ...]] = None,
               limit: Optional[int] = None,
               seed: Optional[int] = None,
               device: Optional[str] = None) -> ExperimentResult:
    """Sweep agglomeration iterations and sampling steps over a split.

    Reports metrics and median milliseconds per sample for every
    combination of --iteration-sweep (default 1,2,4,6) and --step-sweep
    (default 5,10,20,50) and writes CSV tables and a JSON report.
    """
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir,
                          output_dir=output_dir, split=split,
                          iteration_sweep=iteration_sweep,
                          step_sweep=step_sweep, limit=limit, seed=seed,
                          device=device)
    result = run_experiment(run, load_split(run, run.split), load_models(run))
    _print_cells(f"Iterations at {run.steps} sampling steps",
                 result.iteration_table())
    _print_cells(f"Sampling steps at {run.iterations} iterations",
                 result.step_table())
    for path in write_experiment(result, run.output_dir):
        print(f"Wrote {path}")
    return result


@command("export")
def export(config: Optional[str] = None, data_root: Optional[str] = None,
           checkpoint_dir: Optional[str] = None,
           output_dir: Optional[str] = None, split: Optional[str] = None,
           format: str = "ply", steps: Optional[int] = None,
           iterations: Optional[int] = None, limit: Optional[int] = None,
           seed: Optional[int] = None,
           device: Optional[str] = None) -> list[str]:
    """Assemble a split and export every iteration as colored point clouds.

    Each fragment keeps its color across iterations; the merge log of each
    assembly is written next to its clouds as JSON.
    """
    run = load_run_config(config, data_root=data_root,
                          checkpoint_dir=checkpoint_dir,
                          output_dir=output_dir, split=split, steps=steps,
                          iterations=iterations, limit=limit, seed=seed,
                          device=device)
    if format not in EXPORT_FORMATS:
        raise DomainError(f"Unknown export format '{format}'")
    paths = []
    for assembly_run in _assemble(run):
        paths.extend(export_assembly(assembly_run.sample, assembly_run.result,
                                     run.output_dir, format))
    print(f"Wrote {len(paths)} files to {run.output_dir}")
    return paths
