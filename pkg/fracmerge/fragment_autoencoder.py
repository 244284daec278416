
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from fracmerge.chamfer import chamfer_distance_tensor
from fracmerge.checkpoint import (load_module_state, read_checkpoint,
                                  save_module)
from fracmerge.codebook import Codebook, quantize
from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import POINTS_PER_FRAGMENT
from fracmerge.point_cloud import PointCloud
from fracmerge.set_abstraction import SetAbstraction

CHECKPOINT_KIND = "autoencoder"
COMMITMENT_WEIGHT = 0.25


@dataclass
class EncoderConfig:
    num_points: int = POINTS_PER_FRAGMENT
    latent_dim: int = 64
    num_centers: int = 25
    mid_centers: int = 100
    mid_radius: float = 0.1
    radius: float = 0.25
    neighbors: int = 32
    num_codes: int = 1024
    code_dim: int = 16
    decoder_width: int = 256
    ema_decay: float = 0.99
    dead_code_steps: int = 2000
    commitment_weight: float = COMMITMENT_WEIGHT

    @property
    def patch_size(self) -> int:
        return self.num_points // self.num_centers


@dataclass
class PointLatentSet:
    """Per-fragment latents (25 x 64) and the FPS centers they describe
    (25 x 3, in the fragment's normalized frame)."""

    latents: np.ndarray
    centers: np.ndarray

    def __len__(self) -> int:
        return self.latents.shape[0]


class AutoencoderOutput(NamedTuple):
    centers: torch.Tensor
    latents: torch.Tensor
    quantized: torch.Tensor
    indices: torch.Tensor
    reconstruction: torch.Tensor


class FragmentEncoder(nn.Module):
    """Two single-scale-grouping set abstraction levels (1000 -> 100 -> 25
    centers) and a linear projection to the latent size."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.sa1 = SetAbstraction(config.mid_centers, config.mid_radius,
                                  config.neighbors, 0, [64, 64, 128])
        self.sa2 = SetAbstraction(config.num_centers, config.radius,
                                  config.neighbors, self.sa1.out_channel,
                                  [128, 128, 256])
        self.head = nn.Linear(self.sa2.out_channel, config.latent_dim)

    def forward(self, xyz: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        """[B, N, 3] -> centers [B, 25, 3], latents [B, 25, latent_dim]"""
        l1_xyz, l1_points = self.sa1(xyz, None)
        centers, l2_points = self.sa2(l1_xyz, l1_points)
        return centers, self.head(l2_points)


class PatchDecoder(nn.Module):
    """Decodes each latent into a patch of points around its center."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.patch_size = config.patch_size
        self.mlp = nn.Sequential(
            nn.Linear(config.latent_dim, config.decoder_width), nn.ReLU(),
            nn.Linear(config.decoder_width, config.decoder_width), nn.ReLU(),
            nn.Linear(config.decoder_width, self.patch_size * 3))

    def forward(self, latents: torch.Tensor,
                centers: torch.Tensor) -> torch.Tensor:
        """latents [B, P, D], centers [B, P, 3] -> points [B, P * patch, 3]"""
        B, P, _ = latents.shape
        patches = self.mlp(latents).reshape(B, P, self.patch_size, 3)
        return (patches + centers.unsqueeze(2)).reshape(B, -1, 3)


class FragmentAutoencoder(nn.Module):
    """Set-abstraction encoder, EMA codebook and patch decoder."""

    config: EncoderConfig

    def __init__(self, config: Optional[EncoderConfig] = None):
        super().__init__()
        config = config or EncoderConfig()
        self.config = config
        self.encoder = FragmentEncoder(config)
        self.codebook = Codebook(config.num_codes, config.code_dim,
                                 config.ema_decay,
                                 dead_after=config.dead_code_steps)
        self.decoder = PatchDecoder(config)

    def forward(self, xyz: torch.Tensor) -> AutoencoderOutput:
        """Encodes, quantizes and decodes a batch of normalized clouds.

        In training mode the codebook takes one EMA step on the batch. The
        decoder sees the quantized latents through a straight-through
        estimator; `quantized` in the output holds the raw codebook vectors
        for the loss.
        """
        centers, latents = self.encoder(xyz)
        flat = latents.reshape(-1, self.config.code_dim)
        indices = self.codebook.nearest(flat.detach())
        quantized = self.codebook.lookup(indices).reshape(latents.shape)
        if self.training:
            self.codebook.update(flat.detach(), indices)
        straight_through = latents + (quantized - latents).detach()
        reconstruction = self.decoder(straight_through, centers)
        n_chunks = self.config.latent_dim // self.config.code_dim
        return AutoencoderOutput(
            centers, latents, quantized,
            indices.reshape(*latents.shape[:-1], n_chunks), reconstruction)

    def save(self, path: str, step: int) -> None:
        save_module(path, CHECKPOINT_KIND, self, asdict(self.config), step)

    @staticmethod
    def load(path: str) -> tuple["FragmentAutoencoder", int]:
        """Rebuilds an autoencoder from a checkpoint; returns it with the
        training step it was saved at."""
        checkpoint = read_checkpoint(path, CHECKPOINT_KIND)
        model = FragmentAutoencoder(EncoderConfig(**checkpoint.config))
        load_module_state(model, checkpoint, path)
        model.eval()
        return model, checkpoint.step


def _cloud_tensor(pc: Union[PointCloud, np.ndarray], num_points: int,
                  device: torch.device) -> torch.Tensor:
    points = pc.points if isinstance(pc, PointCloud) else np.asarray(pc)
    if points.shape != (num_points, 3):
        raise DomainError(
            f"Expected a normalized cloud of {num_points} points, got shape " +
            f"{points.shape}")
    return torch.as_tensor(points, dtype=torch.float32,
                           device=device).unsqueeze(0)


def encode_fragment(pc: Union[PointCloud, np.ndarray],
                    model: FragmentAutoencoder) -> PointLatentSet:
    """Encodes one normalized fragment cloud into 25 point latents
    (before quantization) and their FPS centers.

    Raises
    ------
    DomainError
        If the cloud does not have exactly 1000 points.
    """
    device = next(model.parameters()).device
    xyz = _cloud_tensor(pc, model.config.num_points, device)
    with torch.no_grad():
        centers, latents = model.encoder(xyz)
    return PointLatentSet(latents[0].cpu().numpy(), centers[0].cpu().numpy())


def decode_fragment(pls: PointLatentSet,
                    model: FragmentAutoencoder) -> PointCloud:
    """Decodes a (quantized) latent set back into 25 x 40 = 1000 points."""
    device = next(model.parameters()).device
    latents = torch.as_tensor(pls.latents, dtype=torch.float32,
                              device=device).unsqueeze(0)
    centers = torch.as_tensor(pls.centers, dtype=torch.float32,
                              device=device).unsqueeze(0)
    with torch.no_grad():
        points = model.decoder(latents, centers)[0]
    return PointCloud(points.cpu().numpy().astype(np.float64))


def autoencoder_loss(points: torch.Tensor, reconstruction: torch.Tensor,
                     latents: torch.Tensor, quantized: torch.Tensor,
                     beta: float = COMMITMENT_WEIGHT
                     ) -> tuple[torch.Tensor, dict[str, float]]:
    """Reconstruction plus vector-quantization loss.

    Parameters
    ----------
    points, reconstruction : torch.Tensor
        Input and decoded clouds, [B, N, 3] and [B, M, 3].
    latents : torch.Tensor
        Encoder output before quantization.
    quantized : torch.Tensor
        The codebook vectors chosen for `latents` (no straight-through).
    beta : float, optional
        Weight of the commitment term, 0.25 by default.

    Returns
    -------
    tuple[torch.Tensor, dict[str, float]]
        The scalar loss (Chamfer + codebook + beta * commitment, squared
        errors averaged over elements) and its components.
    """
    chamfer = chamfer_distance_tensor(points, reconstruction).mean()
    codebook_term = F.mse_loss(quantized, latents.detach())
    commitment_term = F.mse_loss(latents, quantized.detach())
    loss = chamfer + codebook_term + beta * commitment_term
    return loss, {"chamfer": float(chamfer),
                  "codebook": float(codebook_term),
                  "commitment": float(beta * commitment_term)}


class FrozenEncoder:
    """Read-only encoder and codebook handle for downstream models.

    Parameters never receive gradients and the codebook is never updated, so
    one handle can be shared between threads.
    """

    _model: FragmentAutoencoder
    _device: torch.device

    def __init__(self, model: FragmentAutoencoder,
                 device: Union[str, torch.device] = "cpu"):
        self._model = model.to(device).eval()
        self._device = torch.device(device)
        for parameter in self._model.parameters():
            parameter.requires_grad_(False)

    @staticmethod
    def load(path: str, device: Union[str, torch.device] = "cpu"
             ) -> "FrozenEncoder":
        model, _ = FragmentAutoencoder.load(path)
        return FrozenEncoder(model, device)

    @property
    def config(self) -> EncoderConfig:
        return self._model.config

    @property
    def codebook(self) -> Codebook:
        return self._model.codebook

    @property
    def device(self) -> torch.device:
        return self._device

    def encode(self, xyz: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched encoding for the denoiser and verifier.

        Parameters
        ----------
        xyz : torch.Tensor
            Normalized clouds [B, 1000, 3].

        Returns
        -------
        tuple[torch.Tensor, torch.Tensor]
            FPS centers [B, 25, 3] and quantized latents [B, 25, 64].
        """
        if xyz.shape[1:] != (self.config.num_points, 3):
            raise DomainError(
                f"Expected clouds of {self.config.num_points} points, got " +
                f"shape {tuple(xyz.shape)}")
        with torch.no_grad():
            centers, latents = self._model.encoder(xyz.to(self._device))
            quantized, _ = quantize(latents, self._model.codebook)
        return centers, quantized

    def encode_fragment(self, pc: Union[PointCloud, np.ndarray]
                        ) -> PointLatentSet:
        return encode_fragment(pc, self._model)

    def quantize(self, pls: PointLatentSet) -> PointLatentSet:
        quantized, _ = quantize(pls.latents, self._model.codebook)
        return PointLatentSet(quantized.cpu().numpy(), pls.centers)
