
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.metrics import roc_auc_score
from tqdm import tqdm

from fracmerge.alignment_solver import AlignmentSolver
from fracmerge.assembly_state import AssemblyState
from fracmerge.fragment_record import AssemblySample
from fracmerge.histogram import HISTOGRAM_SIZE
from fracmerge.matcher import PointMatcher
from fracmerge.pair_verifier import (ROTATION_THRESHOLD_DEG,
                                     TRANSLATION_THRESHOLD, PairNodes,
                                     PairVerifier, VerifierConfig,
                                     build_pair_nodes, make_pair_labels)
from fracmerge.pose import Pose7
from fracmerge.preprocessing import prepare_test_sample
from fracmerge.training_error import TrainingError

logger = logging.getLogger(__name__)


@dataclass
class VerifierTrainingConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 2e-4
    weight_decay: float = 1e-6
    held_out_fraction: float = 0.2
    seed: int = 0
    device: str = "cpu"


class VerifierExample(NamedTuple):
    nodes: PairNodes
    labels: np.ndarray


@dataclass
class VerifierTrainingResult:
    model: PairVerifier
    positive_fraction: float
    steps: int = 0
    epoch_loss: list[float] = field(default_factory=list)
    held_out_auc: Optional[float] = None


def verifier_example(assembly: AssemblySample, poses: Sequence[Pose7],
                     matcher: PointMatcher,
                     rotation_threshold: float = ROTATION_THRESHOLD_DEG,
                     translation_threshold: float = TRANSLATION_THRESHOLD
                     ) -> VerifierExample:
    """Pair nodes of one assembly under the given pose estimates, labelled
    against its ground truth."""
    clouds = [fragment.local_points() for fragment in assembly.fragments]
    nodes = build_pair_nodes(clouds, poses, matcher)
    labels = make_pair_labels(poses, assembly.gt_poses(), rotation_threshold,
                              translation_threshold)
    return VerifierExample(nodes, labels)


def generate_verifier_examples(
        assemblies: Sequence[AssemblySample], solver: AlignmentSolver,
        matcher: PointMatcher, rng: np.random.Generator,
        rotation_threshold: float = ROTATION_THRESHOLD_DEG,
        translation_threshold: float = TRANSLATION_THRESHOLD
        ) -> list[VerifierExample]:
    """Runs the alignment solver once over each assembly (largest fragment
    anchored, random local frames) and labels the resulting pairs."""
    examples = []
    for assembly in tqdm(assemblies, desc="Labelling pairs"):
        sample = prepare_test_sample(assembly, rng)
        poses = solver.solve(AssemblyState.from_assembly(sample).groups, rng)
        examples.append(verifier_example(sample, poses, matcher,
                                         rotation_threshold,
                                         translation_threshold))
    return examples


def class_balance(examples: Sequence[VerifierExample]) -> float:
    """Fraction of positive pair labels."""
    labels = np.concatenate([example.labels for example in examples])
    return float(labels.mean()) if labels.size else 0.0


def _collate(examples: Sequence[VerifierExample], device: str
             ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor,
                        torch.Tensor]:
    N = max(len(example.nodes) for example in examples)
    B = len(examples)
    pairs = np.zeros((B, N, 2), dtype=np.int64)
    histograms = np.zeros((B, N, HISTOGRAM_SIZE), dtype=np.float32)
    labels = np.zeros((B, N), dtype=np.float32)
    mask = np.zeros((B, N), dtype=bool)
    for b, example in enumerate(examples):
        n = len(example.nodes)
        pairs[b, :n] = example.nodes.pairs
        histograms[b, :n] = example.nodes.histograms
        labels[b, :n] = example.labels
        mask[b, :n] = True
    return (torch.as_tensor(pairs, device=device),
            torch.as_tensor(histograms, device=device),
            torch.as_tensor(labels, device=device),
            torch.as_tensor(mask, device=device))


def evaluate_auc(model: PairVerifier,
                 examples: Sequence[VerifierExample]) -> Optional[float]:
    """ROC-AUC of the verifier over all pairs of the examples; None when
    the labels hold a single class."""
    labels = np.concatenate([example.labels for example in examples])
    if labels.size == 0 or labels.all() or not labels.any():
        return None
    scores = np.concatenate([model.predict(example.nodes)
                             for example in examples])
    return float(roc_auc_score(labels, scores))


def _split(examples: Sequence[VerifierExample], fraction: float,
           rng: np.random.Generator
           ) -> tuple[list[VerifierExample], list[VerifierExample]]:
    order = rng.permutation(len(examples))
    n_held_out = int(round(fraction * len(examples)))
    if len(examples) < 2:
        n_held_out = 0
    held_out = [examples[i] for i in order[:n_held_out]]
    train = [examples[i] for i in order[n_held_out:]]
    return train, held_out


def train_verifier(examples: Sequence[VerifierExample],
                   config: Optional[VerifierTrainingConfig] = None,
                   model_config: Optional[VerifierConfig] = None,
                   checkpoint_path: Optional[str] = None
                   ) -> VerifierTrainingResult:
    """Trains the pair verifier with binary cross-entropy.

    Parameters
    ----------
    examples : Sequence[VerifierExample]
        Labelled pair nodes, e.g. from `generate_verifier_examples`.
    config : Optional[VerifierTrainingConfig], optional
        Optimization settings; a fraction of the examples is held out for the
        reported ROC-AUC.
    model_config : Optional[VerifierConfig], optional
        Model settings.
    checkpoint_path : Optional[str], optional
        Where to write the final checkpoint.

    Returns
    -------
    VerifierTrainingResult
        The trained model, class balance, per-epoch loss and held-out AUC.

    Raises
    ------
    TrainingError
        If there are no labels, all labels share one class, or the loss
        becomes non-finite.
    """
    config = config or VerifierTrainingConfig()
    labels = np.concatenate([example.labels for example in examples]) \
        if examples else np.zeros(0, dtype=bool)
    if labels.size == 0:
        raise TrainingError("Cannot train the verifier on no pairs")
    positive_fraction = float(labels.mean())
    if labels.all() or not labels.any():
        raise TrainingError(
            f"All {labels.size} verifier labels are " +
            f"{'positive' if labels.all() else 'negative'}; the denoiser " +
            "outputs give nothing to discriminate")
    logger.info("Verifier training pairs: %d (%.1f%% positive)", labels.size,
                100 * positive_fraction)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    train, held_out = _split(examples, config.held_out_fraction, rng)
    model = PairVerifier(model_config).to(config.device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr,
                                  weight_decay=config.weight_decay)
    result = VerifierTrainingResult(model, positive_fraction)
    model.train()
    progress = tqdm(range(config.epochs), desc="Training verifier")
    for epoch in progress:
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start:start + config.batch_size]]
            pairs, histograms, targets, mask = _collate(batch, config.device)
            probabilities = model(pairs, histograms, mask)
            loss = F.binary_cross_entropy(probabilities[mask], targets[mask])
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"Verifier loss diverged at epoch {epoch}, step " +
                    f"{result.steps}: {loss.item()}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            result.steps += 1
            losses.append(loss.item())
        result.epoch_loss.append(float(np.mean(losses)))
        progress.set_description(
            f"[Epoch {epoch:3d}] loss {result.epoch_loss[-1]:.6f}")
    model.eval()
    if held_out:
        result.held_out_auc = evaluate_auc(model, held_out)
    logger.info("Verifier trained for %d steps, held-out AUC %s",
                result.steps, "n/a" if result.held_out_auc is None
                else f"{result.held_out_auc:.3f}")
    if checkpoint_path is not None:
        model.save(checkpoint_path, result.steps)
    return result
