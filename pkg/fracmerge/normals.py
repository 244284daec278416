
import logging
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from fracmerge.domain_error import DomainError
from fracmerge.point_cloud import PointCloud

logger = logging.getLogger(__name__)

DEFAULT_NORMAL_NEIGHBORS = 16
_RANK_TOLERANCE = 1e-10


def estimate_normals(pc: PointCloud,
                     k_neighbors: int = DEFAULT_NORMAL_NEIGHBORS
                     ) -> PointCloud:
    """Estimates per-point normals from the covariance of the k nearest
    neighbours (the point itself included).

    The normal is the eigenvector of the smallest eigenvalue and is not
    oriented. Neighbourhoods of rank < 2 (e.g. collinear points) get the
    normal (0, 0, 1) and are flagged in the `degenerate` mask of the result.

    Parameters
    ----------
    pc : PointCloud
        The cloud, with more than k_neighbors points.
    k_neighbors : int
        Neighbourhood size, at least 3.

    Returns
    -------
    PointCloud
        The same points with unit normals and the degeneracy mask.
    """
    n = len(pc)
    if k_neighbors < 3 or n <= k_neighbors:
        raise DomainError(
            f"Normal estimation needs |pc| > k_neighbors >= 3, got " +
            f"|pc|={n}, k_neighbors={k_neighbors}")
    _, neighbors = cKDTree(pc.points).query(pc.points, k=k_neighbors)
    neighborhoods = pc.points[neighbors]
    centered = neighborhoods - neighborhoods.mean(axis=1, keepdims=True)
    covariances = np.einsum("nki,nkj->nij", centered, centered) / k_neighbors
    eigenvalues, eigenvectors = np.linalg.eigh(covariances)
    normals = eigenvectors[:, :, 0]
    scale = np.maximum(eigenvalues[:, 2], np.finfo(np.float64).tiny)
    degenerate = eigenvalues[:, 1] <= _RANK_TOLERANCE * scale
    if np.any(degenerate):
        logger.debug("%d of %d points have degenerate neighbourhoods",
                     int(degenerate.sum()), n)
        normals[degenerate] = [0.0, 0.0, 1.0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pc.points, normals, degenerate)


def orient_normals_outward(pc: PointCloud,
                           center: Optional[np.ndarray] = None) -> PointCloud:
    """Flips each normal so it points away from the cloud's center of mass
    (or from the given center)."""
    if pc.normals is None:
        raise DomainError("Cannot orient a cloud without normals")
    if center is None:
        center = pc.center_of_mass()
    flip = np.sum(pc.normals * (pc.points - center), axis=1) < 0
    normals = np.where(flip[:, None], -pc.normals, pc.normals)
    return PointCloud(pc.points, normals, pc.degenerate)
