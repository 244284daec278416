
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from fracmerge.fragment_autoencoder import (EncoderConfig,
                                            FragmentAutoencoder,
                                            FrozenEncoder, autoencoder_loss)
from fracmerge.fragment_record import AssemblySample
from fracmerge.training_error import TrainingError

logger = logging.getLogger(__name__)

MOVING_AVERAGE_DECAY = 0.9


@dataclass
class AutoencoderTrainingConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0
    device: str = "cpu"


@dataclass
class AutoencoderTrainingResult:
    model: FragmentAutoencoder
    steps: int
    epoch_chamfer: list[float] = field(default_factory=list)
    moving_average_loss: list[float] = field(default_factory=list)
    epoch_perplexity: list[float] = field(default_factory=list)

    @property
    def codebook_usage(self) -> float:
        return self.model.codebook.usage_fraction()

    def frozen(self) -> FrozenEncoder:
        """The encoder and codebook for downstream use."""
        return FrozenEncoder(self.model)


def fragment_clouds(assemblies: Sequence[AssemblySample]) -> np.ndarray:
    """Stacks the normalized clouds of every fragment, [N, 1000, 3]."""
    return np.stack([fragment.points for assembly in assemblies
                     for fragment in assembly.fragments]).astype(np.float32)


def _check_finite(loss: torch.Tensor, epoch: int, step: int,
                  components: dict[str, float]) -> None:
    if not torch.isfinite(loss):
        raise TrainingError(
            f"Autoencoder loss diverged at epoch {epoch}, step {step}: " +
            ", ".join(f"{k}={v}" for k, v in components.items()))


def train_autoencoder(clouds: np.ndarray,
                      config: Optional[AutoencoderTrainingConfig] = None,
                      encoder_config: Optional[EncoderConfig] = None,
                      checkpoint_path: Optional[str] = None
                      ) -> AutoencoderTrainingResult:
    """Trains the fragment autoencoder on normalized fragment clouds.

    Parameters
    ----------
    clouds : np.ndarray
        Normalized training clouds, [N, 1000, 3] with N >= 1.
    config : Optional[AutoencoderTrainingConfig], optional
        Optimization settings.
    encoder_config : Optional[EncoderConfig], optional
        Model settings.
    checkpoint_path : Optional[str], optional
        Where to write the final checkpoint.

    Returns
    -------
    AutoencoderTrainingResult
        The trained model with per-epoch mean Chamfer distance and the
        moving-average loss.

    Raises
    ------
    TrainingError
        If the training set is empty or the loss becomes non-finite.
    """
    config = config or AutoencoderTrainingConfig()
    if len(clouds) == 0:
        raise TrainingError("Cannot train the autoencoder on no fragments")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = FragmentAutoencoder(encoder_config).to(config.device)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr,
                                 weight_decay=config.weight_decay)
    data = torch.as_tensor(clouds, dtype=torch.float32)
    result = AutoencoderTrainingResult(model, 0)
    average: Optional[float] = None
    model.train()
    progress = tqdm(range(config.epochs), desc="Training autoencoder")
    for epoch in progress:
        order = rng.permutation(len(data))
        chamfers = []
        perplexities = []
        for start in range(0, len(order), config.batch_size):
            batch = data[order[start:start + config.batch_size]]
            batch = batch.to(config.device)
            optimizer.zero_grad()
            output = model(batch)
            loss, components = autoencoder_loss(
                batch, output.reconstruction, output.latents,
                output.quantized, model.config.commitment_weight)
            _check_finite(loss, epoch, result.steps, components)
            loss.backward()
            optimizer.step()
            result.steps += 1
            chamfers.append(components["chamfer"])
            perplexities.append(model.codebook.perplexity(output.indices))
            average = loss.item() if average is None else \
                MOVING_AVERAGE_DECAY * average + \
                (1 - MOVING_AVERAGE_DECAY) * loss.item()
        result.epoch_chamfer.append(float(np.mean(chamfers)))
        result.moving_average_loss.append(average)
        result.epoch_perplexity.append(float(np.mean(perplexities)))
        progress.set_description(
            f"[Epoch {epoch:4d}] loss {average:.6f} " +
            f"chamfer {result.epoch_chamfer[-1]:.6f}")
        logger.debug("Autoencoder epoch %d: loss %.6f, chamfer %.6f, " +
                     "perplexity %.1f", epoch, average,
                     result.epoch_chamfer[-1], result.epoch_perplexity[-1])
    model.eval()
    usage = result.codebook_usage
    logger.info("Autoencoder trained for %d steps, chamfer %.6f -> %.6f, " +
                "codebook usage %.1f%%", result.steps,
                result.epoch_chamfer[0] if result.epoch_chamfer else math.nan,
                result.epoch_chamfer[-1] if result.epoch_chamfer else math.nan,
                100 * usage)
    if checkpoint_path is not None:
        model.save(checkpoint_path, result.steps)
    return result
