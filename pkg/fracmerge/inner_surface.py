
import logging

import numpy as np
from scipy.spatial import cKDTree

from fracmerge.contract_violation import ContractViolation
from fracmerge.domain_error import DomainError
from fracmerge.normals import (DEFAULT_NORMAL_NEIGHBORS, estimate_normals,
                               orient_normals_outward)
from fracmerge.point_cloud import PointCloud

logger = logging.getLogger(__name__)

INNER_SURFACE_DISTANCE = 0.001


def outward_normals(points: np.ndarray,
                    k_neighbors: int = DEFAULT_NORMAL_NEIGHBORS
                    ) -> PointCloud:
    """Estimated normals flipped away from the cloud's center of mass."""
    return orient_normals_outward(
        estimate_normals(PointCloud(points), k_neighbors))


def _inner_mask(source: PointCloud, target: PointCloud,
                tree: cKDTree, distance: float) -> np.ndarray:
    inner = np.zeros(len(source), dtype=bool)
    for i, neighbors in enumerate(tree.query_ball_point(source.points,
                                                        r=distance)):
        if neighbors:
            dots = target.normals[neighbors] @ source.normals[i]
            inner[i] = bool(np.any(dots < 0))
    return inner


def remove_inner_surface_points(a: PointCloud, b: PointCloud,
                                distance: float = INNER_SURFACE_DISTANCE
                                ) -> tuple[PointCloud, PointCloud]:
    """Drops the points where two clouds touch face to face.

    A point is dropped when the other cloud has a point within `distance`
    whose normal points the opposite way (negative dot product). Both clouds
    are filtered against the other's unfiltered points.

    Parameters
    ----------
    a, b : PointCloud
        Clouds in a common frame with outward normals.
    distance : float, optional
        Contact distance, 0.001 by default.

    Returns
    -------
    tuple[PointCloud, PointCloud]
        The filtered clouds.

    Raises
    ------
    ContractViolation
        If every point of either cloud would be removed.
    """
    if a.normals is None or b.normals is None:
        raise DomainError("Inner surface removal needs normals on both clouds")
    inner_a = _inner_mask(a, b, cKDTree(b.points), distance)
    inner_b = _inner_mask(b, a, cKDTree(a.points), distance)
    if inner_a.all() or inner_b.all():
        raise ContractViolation(
            f"Inner surface removal would empty a cloud ({inner_a.sum()} of " +
            f"{len(a)} and {inner_b.sum()} of {len(b)} points inner)")
    logger.debug("Removed %d and %d inner surface points", inner_a.sum(),
                 inner_b.sum())
    return (a.subset(np.flatnonzero(~inner_a)),
            b.subset(np.flatnonzero(~inner_b)))
