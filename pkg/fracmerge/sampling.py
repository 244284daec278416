
from typing import Union

import numpy as np

from fracmerge.domain_error import DomainError
from fracmerge.point_cloud import PointCloud

FPS_SEED_INDEX = 0


def farthest_point_sample(pc: Union[PointCloud, np.ndarray],
                          k: int) -> np.ndarray:
    """Greedy max-min (farthest point) sampling.

    The first selected point is always index 0, so the result is a
    deterministic function of the input.

    Parameters
    ----------
    pc : Union[PointCloud, np.ndarray]
        The cloud, or an (N, 3) array of points.
    k : int
        Number of points to select, 1 <= k <= N.

    Returns
    -------
    np.ndarray
        k distinct indices into the cloud, in selection order.
    """
    points = pc.points if isinstance(pc, PointCloud) else np.asarray(pc)
    n = points.shape[0]
    if k < 1 or k > n:
        raise DomainError(f"Cannot sample {k} points from a cloud of {n}")
    selected = np.empty(k, dtype=np.int64)
    selected[0] = FPS_SEED_INDEX
    distances = np.sum((points - points[FPS_SEED_INDEX]) ** 2, axis=1)
    for i in range(1, k):
        farthest = int(np.argmax(distances))
        selected[i] = farthest
        distances = np.minimum(
            distances, np.sum((points - points[farthest]) ** 2, axis=1))
    return selected


def resample_points(points: np.ndarray, count: int) -> np.ndarray:
    """Returns exactly `count` indices into points, using farthest point
    sampling when there are enough points and cycling through the sampled
    order to pad otherwise."""
    n = points.shape[0]
    if n >= count:
        return farthest_point_sample(points, count)
    order = farthest_point_sample(points, n)
    return np.resize(order, count)
