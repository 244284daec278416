
from typing import Optional

import torch
from torch import nn


def modulate(x: torch.Tensor, shift: torch.Tensor,
             scale: torch.Tensor) -> torch.Tensor:
    """x: [B, N, D], shift/scale: [B, D]"""
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class AdaLNAttentionBlock(nn.Module):
    """Pre-norm self-attention block whose layer norms are modulated by the
    timestep condition.

    The modulation MLP starts at zero, so every block begins as the identity
    map and the residual gates open during training.
    """

    def __init__(self, hidden_size: int, num_heads: int,
                 mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size, elementwise_affine=False,
                                  eps=1e-6)
        self.attn = nn.MultiheadAttention(hidden_size, num_heads,
                                          batch_first=True)
        self.norm2 = nn.LayerNorm(hidden_size, elementwise_affine=False,
                                  eps=1e-6)
        mlp_hidden = int(hidden_size * mlp_ratio)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_size, mlp_hidden), nn.GELU(approximate="tanh"),
            nn.Linear(mlp_hidden, hidden_size))
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(), nn.Linear(hidden_size, 6 * hidden_size))
        nn.init.zeros_(self.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.adaLN_modulation[-1].bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor,
                key_padding_mask: Optional[torch.Tensor] = None,
                attn_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        x: [B, N, D] tokens, c: [B, D] condition.
        key_padding_mask: [B, N], True for tokens to ignore.
        attn_mask: [N, N] or [B * heads, N, N], True where attention is
        not allowed.
        """
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = \
            self.adaLN_modulation(c).chunk(6, dim=1)
        h = modulate(self.norm1(x), shift_msa, scale_msa)
        h, _ = self.attn(h, h, h, key_padding_mask=key_padding_mask,
                         attn_mask=attn_mask, need_weights=False)
        x = x + gate_msa.unsqueeze(1) * h
        h = modulate(self.norm2(x), shift_mlp, scale_mlp)
        return x + gate_mlp.unsqueeze(1) * self.mlp(h)


class AdaLNFinalLayer(nn.Module):
    """Modulated layer norm and linear projection to the output size."""

    def __init__(self, hidden_size: int, out_size: int):
        super().__init__()
        self.norm = nn.LayerNorm(hidden_size, elementwise_affine=False,
                                 eps=1e-6)
        self.linear = nn.Linear(hidden_size, out_size)
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(), nn.Linear(hidden_size, 2 * hidden_size))
        nn.init.zeros_(self.adaLN_modulation[-1].weight)
        nn.init.zeros_(self.adaLN_modulation[-1].bias)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift, scale = self.adaLN_modulation(c).chunk(2, dim=1)
        return self.linear(modulate(self.norm(x), shift, scale))
