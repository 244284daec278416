
from typing import Union

import numpy as np
import torch
from scipy.spatial import cKDTree

from fracmerge.domain_error import DomainError
from fracmerge.point_cloud import PointCloud

# Squared nearest-neighbour distances, averaged per direction, summed over
# both directions. The part accuracy threshold of 0.01 is read against this.
CHAMFER_CONVENTION = "squared-mean-bidirectional-sum"


def _points(pc: Union[PointCloud, np.ndarray]) -> np.ndarray:
    points = pc.points if isinstance(pc, PointCloud) else np.asarray(
        pc, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("Chamfer distance needs two non-empty clouds")
    return points


def nearest_squared_distances(source: np.ndarray,
                              target: np.ndarray) -> np.ndarray:
    distances, _ = cKDTree(target).query(source, k=1)
    return distances ** 2


def chamfer_distance(a: Union[PointCloud, np.ndarray],
                     b: Union[PointCloud, np.ndarray]) -> float:
    """Bidirectional Chamfer distance between two clouds.

    Parameters
    ----------
    a, b : Union[PointCloud, np.ndarray]
        Non-empty clouds.

    Returns
    -------
    float
        Mean squared nearest-neighbour distance from a to b plus the same from
        b to a (see CHAMFER_CONVENTION).
    """
    a_points = _points(a)
    b_points = _points(b)
    return float(nearest_squared_distances(a_points, b_points).mean() +
                 nearest_squared_distances(b_points, a_points).mean())


def chamfer_distance_tensor(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Differentiable batched Chamfer distance with the same convention.

    a: (B, N, 3), b: (B, M, 3). Returns (B,).
    """
    squared = square_distance(a, b)
    return squared.min(dim=2).values.mean(dim=1) + \
        squared.min(dim=1).values.mean(dim=1)


def square_distance(src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
    """Pairwise squared Euclidean distances,
    [B, N, C] x [B, M, C] -> [B, N, M].

    |a - b|^2 = |a|^2 + |b|^2 - 2 a.b, clamped at zero against round-off.
    """
    dist = -2 * torch.matmul(src, dst.transpose(1, 2))
    dist = dist + torch.sum(src ** 2, -1).unsqueeze(-1)
    dist = dist + torch.sum(dst ** 2, -1).unsqueeze(-2)
    return dist.clamp_min(0.0)
