
import logging
from typing import Union

import numpy as np
import torch
from torch import nn

from fracmerge.contract_violation import ContractViolation

logger = logging.getLogger(__name__)

NUM_CODES = 1024
CODE_DIM = 16
EMA_DECAY = 0.99
EMA_EPSILON = 1e-5
DEAD_CODE_STEPS = 2000


class Codebook(nn.Module):
    """Vector-quantization codebook learned with exponential moving averages.

    Entries are buffers, never optimizer parameters: `update` moves each
    entry towards the mean of the chunks assigned to it, with Laplace
    smoothing of the cluster sizes. An entry that has not been chosen for
    `dead_after` consecutive updates is re-seeded from a random chunk of the
    current batch.
    """

    num_codes: int
    code_dim: int
    decay: float
    epsilon: float
    dead_after: int

    def __init__(self, num_codes: int = NUM_CODES, code_dim: int = CODE_DIM,
                 decay: float = EMA_DECAY, epsilon: float = EMA_EPSILON,
                 dead_after: int = DEAD_CODE_STEPS):
        super().__init__()
        self.num_codes = num_codes
        self.code_dim = code_dim
        self.decay = decay
        self.epsilon = epsilon
        self.dead_after = dead_after
        embedding = torch.randn(num_codes, code_dim)
        self.register_buffer("embedding", embedding)
        self.register_buffer("ema_cluster_size", torch.ones(num_codes))
        self.register_buffer("ema_w", embedding.clone())
        self.register_buffer("usage_count",
                             torch.zeros(num_codes, dtype=torch.long))
        self.register_buffer("steps_since_used",
                             torch.zeros(num_codes, dtype=torch.long))

    def nearest(self, flat: torch.Tensor) -> torch.Tensor:
        """Index of the closest (L2) entry for each row of `flat`,
        [N, code_dim] -> [N]."""
        if flat.shape[-1] != self.code_dim:
            raise ContractViolation(
                f"Expected chunks of dimension {self.code_dim}, got " +
                f"{flat.shape[-1]}")
        distances = (torch.sum(flat ** 2, dim=1, keepdim=True)
                     + torch.sum(self.embedding ** 2, dim=1)
                     - 2 * torch.matmul(flat, self.embedding.t()))
        return torch.argmin(distances, dim=1)

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        return self.embedding[indices]

    @torch.no_grad()
    def update(self, flat: torch.Tensor, indices: torch.Tensor) -> None:
        """One EMA step towards the chunks in `flat` assigned to `indices`."""
        encodings = torch.zeros(indices.shape[0], self.num_codes,
                                device=flat.device, dtype=flat.dtype)
        encodings.scatter_(1, indices.unsqueeze(1), 1)
        counts = encodings.sum(dim=0)
        self.ema_cluster_size.mul_(self.decay).add_(
            counts, alpha=1 - self.decay)
        # Laplace smoothing of the cluster size
        n = self.ema_cluster_size.sum()
        smoothed = ((self.ema_cluster_size + self.epsilon)
                    / (n + self.num_codes * self.epsilon) * n)
        dw = torch.matmul(encodings.t(), flat)
        self.ema_w.mul_(self.decay).add_(dw, alpha=1 - self.decay)
        self.embedding.copy_(self.ema_w / smoothed.unsqueeze(1))

        used = counts > 0
        self.usage_count.add_(counts.long())
        self.steps_since_used.add_(1)
        self.steps_since_used[used] = 0
        self._reseed_dead_codes(flat)

    def _reseed_dead_codes(self, flat: torch.Tensor) -> None:
        dead = torch.nonzero(self.steps_since_used >= self.dead_after)
        dead = dead.squeeze(1)
        if dead.numel() == 0:
            return
        picks = torch.randint(flat.shape[0], (dead.numel(),),
                              device=flat.device)
        self.embedding[dead] = flat[picks]
        self.ema_w[dead] = flat[picks]
        self.ema_cluster_size[dead] = 1.0
        self.steps_since_used[dead] = 0
        logger.debug("Re-seeded %d dead codebook entries", dead.numel())

    def usage_fraction(self) -> float:
        """Fraction of entries chosen at least once during training."""
        return float((self.usage_count > 0).float().mean())

    def perplexity(self, indices: torch.Tensor) -> float:
        """Perplexity of the code assignment distribution of `indices`."""
        counts = torch.bincount(indices.reshape(-1),
                                minlength=self.num_codes).float()
        probs = counts / counts.sum().clamp_min(1.0)
        return float(torch.exp(-torch.sum(probs * torch.log(probs + 1e-10))))


def quantize(latent: Union[torch.Tensor, np.ndarray], codebook: Codebook
             ) -> tuple[torch.Tensor, torch.Tensor]:
    """Replaces each chunk of a latent by its nearest codebook entry.

    The last axis is split into chunks of `codebook.code_dim` (4 chunks of 16
    for a 64D latent); each chunk is replaced by the closest entry and the
    chunks are concatenated back. Pure: the codebook is not updated.

    Parameters
    ----------
    latent : Union[torch.Tensor, np.ndarray]
        One latent (64,) or a batch (..., 64).
    codebook : Codebook
        The codebook to quantize against.

    Returns
    -------
    tuple[torch.Tensor, torch.Tensor]
        The quantized latent(s), same shape as the input, and the chosen entry
        indices, shape (..., 4).
    """
    latent = torch.as_tensor(latent, dtype=codebook.embedding.dtype,
                             device=codebook.embedding.device)
    if latent.shape[-1] % codebook.code_dim != 0:
        raise ContractViolation(
            f"Latent dimension {latent.shape[-1]} is not a multiple of " +
            f"{codebook.code_dim}")
    chunks = latent.reshape(-1, codebook.code_dim)
    with torch.no_grad():
        indices = codebook.nearest(chunks)
    quantized = codebook.lookup(indices).reshape(latent.shape)
    n_chunks = latent.shape[-1] // codebook.code_dim
    return quantized, indices.reshape(*latent.shape[:-1], n_chunks)
