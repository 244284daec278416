
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from fracmerge.domain_error import DomainError
from fracmerge.point_cloud import PointCloud
from fracmerge.pose import Pose7, transform_points

POINTS_PER_FRAGMENT = 1000
MIN_FRAGMENTS = 2
MAX_FRAGMENTS = 20
TRAIN_SPLIT = "train"
TEST_SPLIT = "test"


@dataclass(frozen=True, eq=False)
class FragmentRecord:
    """One fragment of an assembly.

    `points` live in the fragment-local normalized frame (center of mass at
    the origin, longest bounding-box side 1). `scale` is the longest side
    before normalization, so `local_points()` gives the fragment in object
    units, and `gt_pose` maps those to the assembly frame.
    """

    id: int
    points: np.ndarray
    scale: float
    gt_pose: Pose7 = field(default_factory=Pose7.identity)
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.asarray(self.points, dtype=np.float32))
        if self.normals is not None:
            object.__setattr__(
                self, "normals", np.asarray(self.normals, dtype=np.float32))
        if not self.scale > 0:
            raise DomainError(
                f"Fragment {self.id} has non-positive scale {self.scale}")

    def local_points(self) -> np.ndarray:
        """Fragment points in object units, centered at its center of mass."""
        return self.points.astype(np.float64) * self.scale

    def local_cloud(self) -> PointCloud:
        normals = None if self.normals is None else \
            self.normals.astype(np.float64)
        return PointCloud(self.local_points(), normals)

    def posed_points(self, pose: Optional[Pose7] = None) -> np.ndarray:
        """Fragment points moved into the assembly frame by `pose`
        (the ground-truth pose by default)."""
        return transform_points(
            self.gt_pose if pose is None else pose, self.local_points())

    def with_pose(self, pose: Pose7) -> "FragmentRecord":
        return replace(self, gt_pose=pose)


@dataclass(frozen=True, eq=False)
class AssemblySample:
    """A fractured object: its fragments and where it came from."""

    fragments: list[FragmentRecord]
    object_id: str
    fracture_id: str
    split: str = "train"

    def __post_init__(self):
        if not MIN_FRAGMENTS <= len(self.fragments) <= MAX_FRAGMENTS:
            raise DomainError(
                f"Assembly {self.name} has {len(self.fragments)} fragments, " +
                f"expected {MIN_FRAGMENTS}-{MAX_FRAGMENTS}")
        ids = [fragment.id for fragment in self.fragments]
        if ids != list(range(len(ids))):
            raise DomainError(
                f"Assembly {self.name} fragment ids must be 0..F-1, got {ids}")
        if not self.split:
            raise DomainError(f"Assembly {self.name} has no split")

    @property
    def name(self) -> str:
        return f"{self.object_id}__{self.fracture_id}"

    def __len__(self) -> int:
        return len(self.fragments)

    def scales(self) -> np.ndarray:
        return np.array([fragment.scale for fragment in self.fragments])

    def gt_poses(self) -> list[Pose7]:
        return [fragment.gt_pose for fragment in self.fragments]

    def with_fragments(self,
                       fragments: list[FragmentRecord]) -> "AssemblySample":
        return replace(self, fragments=fragments)
