
from typing import NamedTuple

import torch

from fracmerge.fragment_autoencoder import FrozenEncoder

IDENTITY_QUATERNION = (1.0, 0.0, 0.0, 0.0)
_MIN_EXTENT = 1e-8


class FragmentTokens(NamedTuple):
    latents: torch.Tensor
    centers: torch.Tensor
    scales: torch.Tensor


def normalized_quaternions(q: torch.Tensor, eps: float = 1e-12
                           ) -> torch.Tensor:
    """Unit quaternions from raw diffusion states, [..., 4]; a (near) zero
    quaternion becomes the identity."""
    norm = q.norm(dim=-1, keepdim=True)
    identity = torch.tensor(IDENTITY_QUATERNION, dtype=q.dtype,
                            device=q.device).expand_as(q)
    return torch.where(norm > eps, q / norm.clamp_min(eps), identity)


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """Rotation matrices of unit quaternions (w, x, y, z), [..., 4] ->
    [..., 3, 3]."""
    w, x, y, z = q.unbind(-1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=-1).reshape(*q.shape[:-1], 3, 3)


def fragment_tokens(encoder: FrozenEncoder, clouds: torch.Tensor,
                    q: torch.Tensor) -> FragmentTokens:
    """Encodes every fragment under its current rotation estimate.

    Each cloud is rotated by its (normalized) quaternion, re-normalized to a
    unit bounding box around its center of mass, and encoded. Centers are
    mapped back to object units, so a cloud that is not centered at the
    origin (an anchor expressed in the assembly frame) keeps its position in
    its tokens.

    Parameters
    ----------
    encoder : FrozenEncoder
        The frozen encoder and codebook.
    clouds : torch.Tensor
        Fragment clouds in object units, [..., N, 3].
    q : torch.Tensor
        Raw quaternion part of the alignments, [..., 4].

    Returns
    -------
    FragmentTokens
        Quantized latents [..., 25, 64], centers [..., 25, 3] and scales
        (longest bounding-box side) [...].
    """
    lead = clouds.shape[:-2]
    rotations = quaternion_to_matrix(normalized_quaternions(q))
    rotated = clouds @ rotations.transpose(-1, -2)
    com = rotated.mean(dim=-2, keepdim=True)
    extent = (rotated.max(dim=-2).values - rotated.min(dim=-2).values)
    scales = extent.max(dim=-1).values.clamp_min(_MIN_EXTENT)
    normalized = (rotated - com) / scales[..., None, None]
    centers, latents = encoder.encode(
        normalized.reshape(-1, *clouds.shape[-2:]).float())
    centers = centers.reshape(*lead, *centers.shape[1:])
    latents = latents.reshape(*lead, *latents.shape[1:])
    centers = centers * scales[..., None, None] + com
    return FragmentTokens(latents, centers, scales)
