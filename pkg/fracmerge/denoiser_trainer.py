
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from fracmerge.anchors import (NEIGHBOR_ANCHOR_PROBABILITY, select_anchor,
                               sample_training_anchors)
from fracmerge.contacts import CONTACT_EPSILON, contact_neighbors
from fracmerge.denoise_transformer import (POSE_DIM, DenoiserConfig,
                                           DenoiseTransformer)
from fracmerge.diffusion import IDENTITY_ALIGNMENT, diffuse_batch
from fracmerge.fragment_autoencoder import FrozenEncoder
from fracmerge.fragment_record import AssemblySample
from fracmerge.fragment_tokens import fragment_tokens
from fracmerge.preprocessing import (prepare_training_sample,
                                     randomize_local_frames)
from fracmerge.training_error import TrainingError

logger = logging.getLogger(__name__)


@dataclass
class DenoiserTrainingConfig:
    epochs: int = 2000
    batch_size: int = 64
    lr: float = 2e-4
    weight_decay: float = 1e-6
    lr_decay_fractions: tuple[float, ...] = (0.6, 0.85)
    lr_decay: float = 0.1
    neighbor_anchor_probability: float = NEIGHBOR_ANCHOR_PROBABILITY
    contact_epsilon: float = CONTACT_EPSILON
    seed: int = 0
    device: str = "cpu"

    def milestones(self) -> list[int]:
        return [int(round(fraction * self.epochs))
                for fraction in self.lr_decay_fractions]


class TrainingExample(NamedTuple):
    clouds: np.ndarray
    x0: np.ndarray
    anchor_mask: np.ndarray


class TrainingBatch(NamedTuple):
    clouds: torch.Tensor
    x0: torch.Tensor
    anchor_mask: torch.Tensor
    fragment_mask: torch.Tensor


@dataclass
class DenoiserTrainingResult:
    model: DenoiseTransformer
    steps: int = 0
    skipped_steps: int = 0
    epoch_loss: list[float] = field(default_factory=list)


def build_training_example(assembly: AssemblySample,
                           rng: np.random.Generator,
                           neighbors: Optional[dict[int, set[int]]] = None,
                           probability: float = NEIGHBOR_ANCHOR_PROBABILITY
                           ) -> TrainingExample:
    """Turns an assembly into one denoiser training example.

    The assembly is rotated as a whole and centered on its largest
    fragment; the largest fragment and some of its contact neighbours become
    anchors. Anchors are baked into the assembly frame (their clouds posed by
    the ground truth, their target the identity); every other fragment gets a
    random local frame and its ground-truth pose as the target.
    """
    largest = select_anchor(assembly.fragments)
    anchors = sample_training_anchors(assembly, rng, neighbors, probability)
    sample = prepare_training_sample(assembly, rng, largest)
    non_anchors = [f.id for f in sample.fragments if f.id not in anchors]
    sample = randomize_local_frames(sample, rng, non_anchors)
    clouds, x0 = [], []
    for fragment in sample.fragments:
        if fragment.id in anchors:
            clouds.append(fragment.posed_points())
            x0.append(np.array(IDENTITY_ALIGNMENT))
        else:
            clouds.append(fragment.local_points())
            x0.append(fragment.gt_pose.to_vector())
    anchor_mask = np.array([f.id in anchors for f in sample.fragments])
    return TrainingExample(np.stack(clouds), np.stack(x0), anchor_mask)


def collate_examples(examples: Sequence[TrainingExample],
                     device: str = "cpu") -> TrainingBatch:
    """Pads examples to the largest fragment count in the batch. Padding
    repeats the first cloud of its example and is masked out."""
    F = max(len(example.anchor_mask) for example in examples)
    clouds, x0, anchors, valid = [], [], [], []
    for example in examples:
        n = len(example.anchor_mask)
        pad = F - n
        clouds.append(np.concatenate(
            [example.clouds, np.repeat(example.clouds[:1], pad, axis=0)]))
        x0.append(np.concatenate(
            [example.x0, np.tile(IDENTITY_ALIGNMENT, (pad, 1))]))
        anchors.append(np.concatenate(
            [example.anchor_mask, np.zeros(pad, dtype=bool)]))
        valid.append(np.arange(F) < n)
    return TrainingBatch(
        torch.as_tensor(np.stack(clouds), dtype=torch.float32, device=device),
        torch.as_tensor(np.stack(x0), dtype=torch.float32, device=device),
        torch.as_tensor(np.stack(anchors), device=device),
        torch.as_tensor(np.stack(valid), device=device))


def noise_prediction_loss(predicted: torch.Tensor, noise: torch.Tensor,
                          anchor_mask: torch.Tensor,
                          fragment_mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error between injected and predicted noise over the
    real, non-anchor fragments only; zero when there are none."""
    selected = fragment_mask & ~anchor_mask
    if not selected.any():
        return predicted.new_zeros(())
    return ((predicted - noise) ** 2)[selected].mean()


def train_denoiser_step(model: DenoiseTransformer, encoder: FrozenEncoder,
                        optimizer: torch.optim.Optimizer,
                        batch: TrainingBatch,
                        generator: torch.Generator) -> Optional[float]:
    """One optimization step on a batch.

    Parameters
    ----------
    model : DenoiseTransformer
        The model being trained.
    encoder : FrozenEncoder
        Frozen encoder for the point tokens.
    optimizer : torch.optim.Optimizer
        Optimizer over the model parameters.
    batch : TrainingBatch
        Collated examples.
    generator : torch.Generator
        Source of timesteps and noise.

    Returns
    -------
    Optional[float]
        The loss, or None when every fragment is an anchor (no update).

    Raises
    ------
    TrainingError
        If the loss is not finite.
    """
    if not (batch.fragment_mask & ~batch.anchor_mask).any():
        return None
    schedule = model.config.schedule()
    B, F = batch.anchor_mask.shape
    device = batch.x0.device
    t = torch.randint(1, schedule.num_timesteps + 1, (B,),
                      generator=generator).to(device)
    noise = torch.randn(B, F, POSE_DIM, generator=generator).to(device)
    alpha_bar = torch.as_tensor(schedule.alpha_bar, device=device)
    fixed = batch.anchor_mask | ~batch.fragment_mask
    x_t = diffuse_batch(batch.x0, t, noise, alpha_bar, fixed)
    tokens = fragment_tokens(encoder, batch.clouds, x_t[..., :4])
    predicted = model(x_t, tokens.latents, tokens.centers, tokens.scales, t,
                      batch.fragment_mask)
    loss = noise_prediction_loss(predicted, noise, batch.anchor_mask,
                                 batch.fragment_mask)
    if not torch.isfinite(loss):
        raise TrainingError(f"Denoiser loss diverged: {loss.item()}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


def train_denoiser(assemblies: Sequence[AssemblySample],
                   encoder: FrozenEncoder,
                   config: Optional[DenoiserTrainingConfig] = None,
                   model_config: Optional[DenoiserConfig] = None,
                   checkpoint_path: Optional[str] = None
                   ) -> DenoiserTrainingResult:
    """Trains the denoiser with the standard noise-prediction objective.

    Every epoch draws fresh joint rotations, local frames, anchor sets,
    timesteps and noise for each training assembly. AdamW with decoupled
    weight decay; the learning rate drops by `lr_decay` at the configured
    fractions of the epoch budget.

    Parameters
    ----------
    assemblies : Sequence[AssemblySample]
        Training assemblies with ground-truth poses.
    encoder : FrozenEncoder
        Frozen encoder; never updated.
    config : Optional[DenoiserTrainingConfig], optional
        Optimization settings.
    model_config : Optional[DenoiserConfig], optional
        Model and schedule settings.
    checkpoint_path : Optional[str], optional
        Where to write the final checkpoint.

    Returns
    -------
    DenoiserTrainingResult
        The trained model and its per-epoch mean loss.
    """
    config = config or DenoiserTrainingConfig()
    if len(assemblies) == 0:
        raise TrainingError("Cannot train the denoiser on no assemblies")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    model = DenoiseTransformer(model_config).to(config.device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr,
                                  weight_decay=config.weight_decay)
    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=config.milestones(), gamma=config.lr_decay)
    neighbors = [contact_neighbors(assembly, config.contact_epsilon)
                 for assembly in assemblies]
    result = DenoiserTrainingResult(model)
    model.train()
    progress = tqdm(range(config.epochs), desc="Training denoiser")
    for epoch in progress:
        order = rng.permutation(len(assemblies))
        losses = []
        for start in range(0, len(order), config.batch_size):
            examples = [
                build_training_example(assemblies[i], rng, neighbors[i],
                                       config.neighbor_anchor_probability)
                for i in order[start:start + config.batch_size]]
            batch = collate_examples(examples, config.device)
            try:
                loss = train_denoiser_step(model, encoder, optimizer, batch,
                                           generator)
            except TrainingError as e:
                raise TrainingError(
                    f"epoch {epoch}, step {result.steps}: {e}") from e
            if loss is None:
                result.skipped_steps += 1
                continue
            result.steps += 1
            losses.append(loss)
        scheduler.step()
        mean_loss = float(np.mean(losses)) if losses else 0.0
        result.epoch_loss.append(mean_loss)
        progress.set_description(
            f"[Epoch {epoch:4d}] loss {mean_loss:.6f} " +
            f"lr {scheduler.get_last_lr()[0]:.2e}")
        logger.debug("Denoiser epoch %d: loss %.6f", epoch, mean_loss)
    model.eval()
    logger.info("Denoiser trained for %d steps (%d skipped), final loss %.6f",
                result.steps, result.skipped_steps,
                result.epoch_loss[-1] if result.epoch_loss else 0.0)
    if checkpoint_path is not None:
        model.save(checkpoint_path, result.steps)
    return result
