
import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from fracmerge.agglomerator import AssemblyConfig, AssemblyResult, assemble
from fracmerge.alignment_solver import AlignmentSolver
from fracmerge.assembly_store import AssemblyStore
from fracmerge.breaking_bad_assembly_store import BreakingBadAssemblyStore
from fracmerge.denoise_transformer import DenoiseTransformer
from fracmerge.diffusion import DiffusionAlignmentSolver
from fracmerge.file_system_assembly_store import FileSystemAssemblyStore
from fracmerge.fragment_autoencoder import FrozenEncoder
from fracmerge.fragment_record import AssemblySample
from fracmerge.invalid_argument import InvalidArgument
from fracmerge.latent_matcher import LatentMatcher
from fracmerge.load_error import LoadError
from fracmerge.metrics import MetricsReport, evaluate_assembly
from fracmerge.pair_scorer import PairScorer, VerifierPairScorer
from fracmerge.pair_verifier import PairVerifier
from fracmerge.preprocessing import prepare_test_sample
from fracmerge.run_config import RunConfig

logger = logging.getLogger(__name__)

DATASETS = ("synthetic", "breaking_bad")


def open_store(config: RunConfig) -> AssemblyStore:
    """The assembly store named by `config.dataset`."""
    if config.dataset == "synthetic":
        return FileSystemAssemblyStore(config.data_root)
    if config.dataset == "breaking_bad":
        if config.breaking_bad_split_file is None:
            raise InvalidArgument(
                "breaking_bad_split_file is required for the breaking_bad " +
                "dataset")
        return BreakingBadAssemblyStore(
            config.data_root, config.breaking_bad_subset,
            config.breaking_bad_split_file, config.split)
    raise InvalidArgument(
        f"Unknown dataset '{config.dataset}', expected one of " +
        f"{', '.join(DATASETS)}")


def load_split(config: RunConfig, split: str) -> list[AssemblySample]:
    """Assemblies of one split, at most `config.limit` of them."""
    assemblies = open_store(config).get_assemblies(split)
    if not assemblies:
        raise LoadError(config.data_root, f"no assemblies in split '{split}'")
    if config.limit is not None:
        assemblies = assemblies[:config.limit]
    logger.info("Loaded %d %s assemblies from %s", len(assemblies), split,
                config.data_root)
    return assemblies


class Models(NamedTuple):
    encoder: FrozenEncoder
    denoiser: DenoiseTransformer
    verifier: PairVerifier

    def solver(self, steps: int) -> DiffusionAlignmentSolver:
        return DiffusionAlignmentSolver(self.denoiser, self.encoder, steps)

    def scorer(self) -> VerifierPairScorer:
        return VerifierPairScorer(self.verifier.to(self.encoder.device),
                                  LatentMatcher(self.encoder))


def load_models(config: RunConfig) -> Models:
    """Loads the three trained checkpoints; a missing or mismatched file
    raises LoadError naming its path."""
    encoder = FrozenEncoder.load(config.autoencoder_path, config.device)
    denoiser, _ = DenoiseTransformer.load(config.denoiser_path)
    verifier, _ = PairVerifier.load(config.verifier_path)
    return Models(encoder, denoiser, verifier)


@dataclass
class AssemblyRun:
    """One test sample and what assembling it produced."""

    sample: AssemblySample
    result: AssemblyResult
    seconds: float


def assemble_all(assemblies: Sequence[AssemblySample],
                 solver: AlignmentSolver, scorer: PairScorer,
                 config: Optional[AssemblyConfig] = None,
                 seed: int = 0) -> list[AssemblyRun]:
    """Hides the ground truth of every assembly and assembles it. Each
    assembly draws from its own generator seeded by (seed, index), so runs
    are reproducible regardless of order."""
    runs = []
    for index, assembly in enumerate(assemblies):
        rng = np.random.default_rng([seed, index])
        sample = prepare_test_sample(assembly, rng)
        start = time.perf_counter()
        result = assemble(sample, solver, scorer, config, rng)
        runs.append(AssemblyRun(sample, result, time.perf_counter() - start))
    return runs


def evaluate_runs(runs: Sequence[AssemblyRun],
                  iteration: Optional[int] = None,
                  include_anchor: bool = False,
                  rmse_aggregation: str = "assembly") -> MetricsReport:
    """Metrics of the final poses, or of the poses after `iteration`
    rounds."""
    report = MetricsReport(rmse_aggregation=rmse_aggregation)
    for run in runs:
        poses = run.result.poses if iteration is None else \
            run.result.poses_at(iteration)
        report.add(evaluate_assembly(run.sample, poses, run.result.anchor_id,
                                     include_anchor))
    return report
