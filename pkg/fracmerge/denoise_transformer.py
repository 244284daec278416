
from dataclasses import asdict, dataclass
from typing import Optional

import torch
from torch import nn

from fracmerge.adaptive_layer_norm import AdaLNAttentionBlock, AdaLNFinalLayer
from fracmerge.checkpoint import (load_module_state, read_checkpoint,
                                  save_module)
from fracmerge.contract_violation import ContractViolation
from fracmerge.fourier import DEFAULT_NUM_BANDS, FourierEncoding
from fracmerge.noise_schedule import (ALPHA_BAR_FINAL, ALPHA_BAR_KNOT, KNOT,
                                      NUM_TIMESTEPS, NoiseSchedule)
from fracmerge.timestep_embedding import TimestepEmbedder

CHECKPOINT_KIND = "denoiser"
POSE_DIM = 7


@dataclass
class DenoiserConfig:
    hidden_size: int = 512
    num_heads: int = 8
    num_layers: int = 6
    points_per_fragment: int = 25
    latent_dim: int = 64
    num_bands: int = DEFAULT_NUM_BANDS
    num_timesteps: int = NUM_TIMESTEPS
    knot: int = KNOT
    alpha_bar_knot: float = ALPHA_BAR_KNOT
    alpha_bar_final: float = ALPHA_BAR_FINAL

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.num_timesteps, self.knot,
                             self.alpha_bar_knot, self.alpha_bar_final)


class PointFeatureEmbedding(nn.Module):
    """Embeds one point token: the Fourier-encoded 7D alignment of its
    fragment, its latent, its Fourier-encoded center and the fragment's
    Fourier-encoded scale, concatenated (147 + 64 + 63 + 21 = 295) and mapped
    to the hidden size."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.fourier = FourierEncoding(config.num_bands)
        self.latent_dim = config.latent_dim
        self.input_dim = (self.fourier.output_dim(POSE_DIM) +
                          config.latent_dim + self.fourier.output_dim(3) +
                          self.fourier.output_dim(1))
        self.mlp = nn.Sequential(
            nn.Linear(self.input_dim, config.hidden_size), nn.SiLU(),
            nn.Linear(config.hidden_size, config.hidden_size))

    def features(self, x_t: torch.Tensor, latents: torch.Tensor,
                 centers: torch.Tensor, scales: torch.Tensor
                 ) -> torch.Tensor:
        """x_t [..., 7], latents [..., P, Dz], centers [..., P, 3],
        scales [...] -> [..., P, 295]"""
        if x_t.shape[-1] != POSE_DIM or centers.shape[-1] != 3 or \
                latents.shape[-1] != self.latent_dim or \
                centers.shape[:-1] != latents.shape[:-1]:
            raise ContractViolation(
                f"Cannot embed alignments {tuple(x_t.shape)}, latents " +
                f"{tuple(latents.shape)} and centers {tuple(centers.shape)}")
        pose = self.fourier(x_t).unsqueeze(-2)
        scale = self.fourier(scales.unsqueeze(-1)).unsqueeze(-2)
        expand = latents.shape[:-1]
        features = torch.cat([pose.expand(*expand, pose.shape[-1]), latents,
                              self.fourier(centers),
                              scale.expand(*expand, scale.shape[-1])], dim=-1)
        return features

    def forward(self, x_t: torch.Tensor, latents: torch.Tensor,
                centers: torch.Tensor, scales: torch.Tensor) -> torch.Tensor:
        return self.mlp(self.features(x_t, latents, centers, scales))


class DenoiseTransformer(nn.Module):
    """Predicts the noise added to each fragment's 7D alignment.

    Every fragment contributes 25 point tokens. The blocks alternate
    attention within each fragment (local) and attention over all tokens of
    the assembly (global); both are conditioned on the timestep through
    adaptive layer norms. The tokens of each fragment are mean-pooled and
    projected to 7 values. There is no positional embedding of the fragment
    index, so permuting fragments permutes the output.
    """

    config: DenoiserConfig

    def __init__(self, config: Optional[DenoiserConfig] = None):
        super().__init__()
        config = config or DenoiserConfig()
        self.config = config
        self.embedding = PointFeatureEmbedding(config)
        self.timestep_embedder = TimestepEmbedder(config.hidden_size)
        self.local_blocks = nn.ModuleList([
            AdaLNAttentionBlock(config.hidden_size, config.num_heads)
            for _ in range(config.num_layers)])
        self.global_blocks = nn.ModuleList([
            AdaLNAttentionBlock(config.hidden_size, config.num_heads)
            for _ in range(config.num_layers)])
        self.final_layer = AdaLNFinalLayer(config.hidden_size, POSE_DIM)

    def _global_mask(self, fragment_mask: torch.Tensor,
                     block_mask: Optional[torch.Tensor]) -> torch.Tensor:
        B, F = fragment_mask.shape
        P = self.config.points_per_fragment
        padded = ~fragment_mask.repeat_interleave(P, dim=1)
        mask = padded.unsqueeze(1).expand(B, F * P, F * P)
        if block_mask is not None:
            mask = mask | block_mask.to(mask.device)
        # every token may always attend to itself, so no row is fully masked
        eye = torch.eye(F * P, dtype=torch.bool, device=mask.device)
        mask = mask & ~eye
        return mask.repeat_interleave(self.config.num_heads, dim=0)

    def forward(self, x_t: torch.Tensor, latents: torch.Tensor,
                centers: torch.Tensor, scales: torch.Tensor,
                t: torch.Tensor,
                fragment_mask: Optional[torch.Tensor] = None,
                block_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Predicts noise for a batch of assemblies.

        Parameters
        ----------
        x_t : torch.Tensor
            Noisy alignments, [B, F, 7].
        latents : torch.Tensor
            Point latents, [B, F, 25, 64].
        centers : torch.Tensor
            Point centers, [B, F, 25, 3].
        scales : torch.Tensor
            Fragment scales, [B, F].
        t : torch.Tensor
            Timesteps, [B].
        fragment_mask : Optional[torch.Tensor], optional
            [B, F], True for real fragments and False for padding.
        block_mask : Optional[torch.Tensor], optional
            Extra [F * 25, F * 25] mask for the global blocks, True where
            attention is not allowed.

        Returns
        -------
        torch.Tensor
            Predicted noise, [B, F, 7].
        """
        B, F, P, _ = latents.shape
        if P != self.config.points_per_fragment:
            raise ContractViolation(
                f"Each fragment needs {self.config.points_per_fragment} " +
                f"tokens, got {P}")
        if fragment_mask is None:
            fragment_mask = torch.ones(B, F, dtype=torch.bool,
                                       device=latents.device)
        tokens = self.embedding(x_t, latents, centers, scales)
        D = tokens.shape[-1]
        c = self.timestep_embedder(t)
        c_local = c.repeat_interleave(F, dim=0)
        global_mask = self._global_mask(fragment_mask, block_mask)
        for local_block, global_block in zip(self.local_blocks,
                                             self.global_blocks):
            tokens = local_block(tokens.reshape(B * F, P, D), c_local)
            tokens = global_block(tokens.reshape(B, F * P, D), c,
                                  attn_mask=global_mask)
            tokens = tokens.reshape(B, F, P, D)
        pooled = tokens.mean(dim=2)
        return self.final_layer(pooled, c)

    def save(self, path: str, step: int) -> None:
        save_module(path, CHECKPOINT_KIND, self, asdict(self.config), step)

    @staticmethod
    def load(path: str) -> tuple["DenoiseTransformer", int]:
        checkpoint = read_checkpoint(path, CHECKPOINT_KIND)
        model = DenoiseTransformer(DenoiserConfig(**checkpoint.config))
        load_module_state(model, checkpoint, path)
        model.eval()
        return model, checkpoint.step
