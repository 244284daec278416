
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from fracmerge.alignment_solver import AlignmentSolver
from fracmerge.assembly_state import FragmentGroup
from fracmerge.contract_violation import ContractViolation
from fracmerge.denoise_transformer import POSE_DIM, DenoiseTransformer
from fracmerge.domain_error import DomainError
from fracmerge.fragment_autoencoder import FrozenEncoder
from fracmerge.fragment_tokens import IDENTITY_QUATERNION, fragment_tokens
from fracmerge.noise_schedule import NoiseSchedule
from fracmerge.pose import Pose7

logger = logging.getLogger(__name__)

DEFAULT_SAMPLING_STEPS = 20
IDENTITY_ALIGNMENT = IDENTITY_QUATERNION + (0.0, 0.0, 0.0)

NoisePredictor = Callable[[torch.Tensor, int], torch.Tensor]


@dataclass
class NoisyAlignment:
    x_t: np.ndarray
    t: int
    eps: np.ndarray


def forward_diffuse(x0: np.ndarray, t: int, rng: np.random.Generator,
                    schedule: NoiseSchedule = NoiseSchedule(),
                    is_anchor: bool = False) -> NoisyAlignment:
    """Noises a 7D alignment to timestep t.

    Parameters
    ----------
    x0 : np.ndarray
        Clean alignment (qw, qx, qy, qz, tx, ty, tz).
    t : int
        Timestep in [1, T].
    rng : np.random.Generator
        Source of the Gaussian noise.
    schedule : NoiseSchedule, optional
        The noise schedule.
    is_anchor : bool, optional
        Anchors are never noised; passing one is a caller error.

    Returns
    -------
    NoisyAlignment
        x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, with eps.
    """
    if is_anchor:
        raise ContractViolation("Anchor alignments are never noised")
    if not 1 <= t <= schedule.num_timesteps:
        raise DomainError(
            f"Timestep {t} outside [1, {schedule.num_timesteps}]")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.standard_normal(x0.shape)
    alpha_bar = schedule.alpha_bar_at(t)
    x_t = np.sqrt(alpha_bar) * x0 + np.sqrt(1 - alpha_bar) * eps
    return NoisyAlignment(x_t, t, eps)


def diffuse_batch(x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor,
                  alpha_bar: torch.Tensor,
                  anchor_mask: torch.Tensor) -> torch.Tensor:
    """Batched forward process, [B, F, 7]; anchors keep x0."""
    ab = alpha_bar[t].to(x0.dtype)[:, None, None]
    x_t = ab.sqrt() * x0 + (1 - ab).sqrt() * noise
    return torch.where(anchor_mask.unsqueeze(-1), x0, x_t)


def ddim_step(x_t: torch.Tensor, eps: torch.Tensor, alpha_bar_t: float,
              alpha_bar_s: float) -> torch.Tensor:
    """Deterministic (eta = 0) update from timestep t to an earlier s."""
    x0_hat = (x_t - np.sqrt(1 - alpha_bar_t) * eps) / np.sqrt(alpha_bar_t)
    return np.sqrt(alpha_bar_s) * x0_hat + np.sqrt(1 - alpha_bar_s) * eps


def reverse_process(x_T: torch.Tensor, predict: NoisePredictor,
                    schedule: NoiseSchedule, steps: int,
                    anchor_mask: torch.Tensor) -> torch.Tensor:
    """Runs the subsampled reverse process from x_T.

    Parameters
    ----------
    x_T : torch.Tensor
        Initial states, [F, 7].
    predict : NoisePredictor
        Called with the current states and integer timestep, returns the
        predicted noise [F, 7].
    schedule : NoiseSchedule
        The noise schedule.
    steps : int
        Number of updates; the T-step ladder is subsampled evenly.
    anchor_mask : torch.Tensor
        [F] booleans; anchors are reset to the identity alignment before
        every prediction and at the end.

    Returns
    -------
    torch.Tensor
        The final states x_0, [F, 7].
    """
    ladder = schedule.sampling_timesteps(steps)
    identity = torch.tensor(IDENTITY_ALIGNMENT, dtype=x_T.dtype,
                            device=x_T.device)
    anchors = anchor_mask.unsqueeze(-1)
    x = torch.where(anchors, identity, x_T)
    for t, s in zip(ladder[:-1], ladder[1:]):
        eps = predict(x, int(t))
        x = ddim_step(x, eps, schedule.alpha_bar_at(int(t)),
                      schedule.alpha_bar_at(int(s)))
        x = torch.where(anchors, identity, x)
    return x


def sample_alignments(model: DenoiseTransformer, encoder: FrozenEncoder,
                      clouds: Sequence[np.ndarray], anchor_mask: np.ndarray,
                      steps: int, rng: np.random.Generator) -> list[Pose7]:
    """Samples one alignment per piece with the denoiser.

    Parameters
    ----------
    model : DenoiseTransformer
        Trained noise predictor.
    encoder : FrozenEncoder
        The frozen encoder; latents are recomputed under the current rotation
        estimate at every step.
    clouds : Sequence[np.ndarray]
        One (1000, 3) cloud per piece in object units (anchors in the
        assembly frame).
    anchor_mask : np.ndarray
        Boolean mask of the anchors.
    steps : int
        Number of reverse updates, e.g. 20.
    rng : np.random.Generator
        Seeds the initial noise.

    Returns
    -------
    list[Pose7]
        Normalized poses; exactly the identity for every anchor.

    Raises
    ------
    DomainError
        If steps <= 0.
    """
    if steps <= 0:
        raise DomainError(f"Sampling steps must be positive, got {steps}")
    anchor_mask = np.asarray(anchor_mask, dtype=bool)
    device = encoder.device
    schedule = model.config.schedule()
    clouds_t = torch.as_tensor(np.stack(clouds), dtype=torch.float32,
                               device=device)
    anchors = torch.as_tensor(anchor_mask, device=device)
    generator = torch.Generator().manual_seed(int(rng.integers(2 ** 31)))
    x_T = torch.randn(len(clouds), POSE_DIM, generator=generator)
    all_anchors = bool(anchor_mask.all())

    def predict(x: torch.Tensor, t: int) -> torch.Tensor:
        tokens = fragment_tokens(encoder, clouds_t, x[:, :4])
        with torch.no_grad():
            eps = model(x.unsqueeze(0), tokens.latents.unsqueeze(0),
                        tokens.centers.unsqueeze(0),
                        tokens.scales.unsqueeze(0),
                        torch.tensor([t], device=device))
        return eps[0]

    if all_anchors:
        x_0 = torch.tensor(IDENTITY_ALIGNMENT).expand(len(clouds), POSE_DIM)
    else:
        x_0 = reverse_process(x_T.to(device), predict, schedule, steps,
                              anchors)
    poses = [Pose7.identity() if is_anchor else Pose7.from_vector(vector)
             for vector, is_anchor in zip(x_0.cpu().double().numpy(),
                                          anchor_mask)]
    logger.debug("Sampled %d alignments (%d anchors) in %d steps",
                 len(poses), int(anchor_mask.sum()), steps)
    return poses


class DiffusionAlignmentSolver(AlignmentSolver):
    """Alignment solver backed by the trained denoiser."""

    _model: DenoiseTransformer
    _encoder: FrozenEncoder
    _steps: int

    def __init__(self, model: DenoiseTransformer, encoder: FrozenEncoder,
                 steps: int = DEFAULT_SAMPLING_STEPS):
        if steps <= 0:
            raise DomainError(f"Sampling steps must be positive, got {steps}")
        self._model = model.to(encoder.device).eval()
        self._encoder = encoder
        self._steps = steps

    @property
    def steps(self) -> int:
        return self._steps

    def solve(self, groups: Sequence[FragmentGroup],
              rng: np.random.Generator) -> list[Pose7]:
        anchor_mask = np.array([group.anchor for group in groups])
        if not np.any(anchor_mask):
            raise DomainError("At least one anchor is required")
        return sample_alignments(self._model, self._encoder,
                                 [group.cloud for group in groups],
                                 anchor_mask, self._steps, rng)

