
import numpy as np
import torch
from torch import nn

from fracmerge.domain_error import DomainError

DEFAULT_NUM_BANDS = 10


def fourier_encode(x, num_bands: int = DEFAULT_NUM_BANDS) -> np.ndarray:
    """Positional encoding of a vector of scalars.

    Each scalar x becomes (x, sin(2^0 pi x), cos(2^0 pi x), ...,
    sin(2^(L-1) pi x), cos(2^(L-1) pi x)) and the per-scalar encodings are
    concatenated, so d scalars give d * (2L + 1) values.

    Parameters
    ----------
    x : array_like
        Vector of d >= 1 finite scalars.
    num_bands : int
        Number of frequency bands L >= 1.

    Returns
    -------
    np.ndarray
        The encoding, of length d * (2 * num_bands + 1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.shape[0] < 1:
        raise DomainError(f"Expected a non-empty vector, got shape {x.shape}")
    if num_bands < 1:
        raise DomainError(f"num_bands must be >= 1, got {num_bands}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"Cannot encode non-finite values {x}")
    frequencies = (2.0 ** np.arange(num_bands)) * np.pi
    angles = x[:, None] * frequencies[None, :]
    waves = np.stack([np.sin(angles), np.cos(angles)], axis=-1)
    waves = waves.reshape(x.shape[0], 2 * num_bands)
    return np.concatenate([x[:, None], waves], axis=1).reshape(-1)


class FourierEncoding(nn.Module):
    """Batched torch version of `fourier_encode`, applied to the last axis."""

    includes_identity = True

    def __init__(self, num_bands: int = DEFAULT_NUM_BANDS):
        super().__init__()
        if num_bands < 1:
            raise DomainError(f"num_bands must be >= 1, got {num_bands}")
        self.num_bands = num_bands
        self.register_buffer(
            "frequencies",
            (2.0 ** torch.arange(num_bands, dtype=torch.float64)) * np.pi,
            persistent=False)

    def output_dim(self, input_dim: int) -> int:
        return input_dim * (2 * self.num_bands + 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        angles = x.unsqueeze(-1) * self.frequencies.to(x.dtype)
        waves = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1)
        waves = waves.flatten(-2)
        encoded = torch.cat([x.unsqueeze(-1), waves], dim=-1)
        return encoded.flatten(-2)
