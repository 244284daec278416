
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from fracmerge.chamfer import square_distance
from fracmerge.sampling import farthest_point_sample


def index_points(points: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """
    Input:
        points: input points data, [B, N, C]
        idx: sample index data, [B, S] or [B, S, K]
    Return:
        indexed points data, [B, S, C] or [B, S, K, C]
    """
    batch_indices = torch.arange(points.shape[0], device=points.device)
    batch_indices = batch_indices.view(
        [-1] + [1] * (idx.dim() - 1)).expand_as(idx)
    return points[batch_indices, idx, :]


def farthest_point_indices(xyz: torch.Tensor, npoint: int) -> torch.Tensor:
    """Batched farthest point sampling, seeded at index 0 for every cloud.
    [B, N, 3] -> [B, npoint]"""
    clouds = xyz.detach().cpu().numpy()
    indices = np.stack([farthest_point_sample(cloud, npoint)
                        for cloud in clouds])
    return torch.from_numpy(indices).to(xyz.device)


def query_ball_point(radius: float, nsample: int, xyz: torch.Tensor,
                     new_xyz: torch.Tensor) -> torch.Tensor:
    """
    Input:
        radius: local region radius
        nsample: max sample number in local region
        xyz: all points, [B, N, 3]
        new_xyz: query points, [B, S, 3]
    Return:
        group_idx: grouped points index, [B, S, nsample]

    Regions with fewer than nsample points repeat their first (closest by
    index) member; the query point itself is always inside its own ball when
    it is one of xyz.
    """
    B, N, _ = xyz.shape
    S = new_xyz.shape[1]
    group_idx = torch.arange(N, dtype=torch.long, device=xyz.device)
    group_idx = group_idx.view(1, 1, N).repeat([B, S, 1])
    sqrdists = square_distance(new_xyz, xyz)
    group_idx[sqrdists > radius ** 2] = N
    group_idx = group_idx.sort(dim=-1)[0][:, :, :nsample]
    group_first = group_idx[:, :, :1].expand(-1, -1, group_idx.shape[-1])
    empty = group_first == N
    if empty.any():
        # a query point with no neighbour falls back to its nearest point
        nearest = sqrdists.argmin(dim=-1, keepdim=True).expand_as(group_idx)
        group_first = torch.where(empty, nearest, group_first)
    mask = group_idx == N
    group_idx[mask] = group_first[mask]
    return group_idx


class SetAbstraction(nn.Module):
    """Single-scale grouping set abstraction: farthest point sampling of
    `npoint` centers, ball query of up to `nsample` neighbours within
    `radius`, a shared MLP over (relative coordinates, features) and max
    pooling per region."""

    def __init__(self, npoint: int, radius: float, nsample: int,
                 in_channel: int, mlp: Sequence[int]):
        super().__init__()
        self.npoint = npoint
        self.radius = radius
        self.nsample = nsample
        layers: list[nn.Module] = []
        last_channel = in_channel + 3
        for out_channel in mlp:
            layers += [nn.Linear(last_channel, out_channel), nn.ReLU()]
            last_channel = out_channel
        self.mlp = nn.Sequential(*layers)
        self.out_channel = last_channel

    def forward(self, xyz: torch.Tensor, points: Optional[torch.Tensor]
                ) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Input:
            xyz: input points position data, [B, N, 3]
            points: input points data, [B, N, D] or None
        Return:
            new_xyz: sampled points position data, [B, npoint, 3]
            new_points: pooled region features, [B, npoint, mlp[-1]]
        """
        fps_idx = farthest_point_indices(xyz, self.npoint)
        new_xyz = index_points(xyz, fps_idx)
        idx = query_ball_point(self.radius, self.nsample, xyz, new_xyz)
        grouped_xyz = index_points(xyz, idx) - new_xyz.unsqueeze(2)
        if points is not None:
            grouped = torch.cat([grouped_xyz, index_points(points, idx)],
                                dim=-1)
        else:
            grouped = grouped_xyz
        return new_xyz, self.mlp(grouped).max(dim=2).values
