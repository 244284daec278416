
from dataclasses import dataclass
from typing import Optional

import numpy as np

from fracmerge.domain_error import DomainError

NORMAL_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A set of 3D points with optional unit normals.

    `degenerate` flags points whose normal could not be estimated from their
    neighbourhood (see `estimate_normals`).
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DomainError(
                f"Expected an (N, 3) array of points, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError("Point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=np.float64)
            if normals.shape != points.shape:
                raise DomainError(
                    f"Normals shape {normals.shape} does not match points " +
                    f"shape {points.shape}")
            object.__setattr__(self, "normals", normals)

    def __len__(self) -> int:
        return self.points.shape[0]

    def has_unit_normals(self) -> bool:
        if self.normals is None:
            return False
        lengths = np.linalg.norm(self.normals, axis=1)
        return bool(np.all(np.abs(lengths - 1.0) < NORMAL_TOLERANCE))

    def center_of_mass(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def longest_extent(self) -> float:
        """Longest dimension of the axis-aligned bounding box."""
        return float(np.ptp(self.points, axis=0).max())

    def subset(self, indices: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points[indices],
            None if self.normals is None else self.normals[indices],
            None if self.degenerate is None else self.degenerate[indices])

    def translated(self, offset: np.ndarray) -> "PointCloud":
        return PointCloud(self.points + offset, self.normals, self.degenerate)

    def scaled(self, factor: float) -> "PointCloud":
        return PointCloud(self.points * factor, self.normals, self.degenerate)
