
import logging
import threading
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.spatial.transform import Rotation

from fracmerge.domain_error import DomainError
from fracmerge.point_cloud import PointCloud

logger = logging.getLogger(__name__)

QUATERNION_TOLERANCE = 1e-6

_warning_lock = threading.Lock()
_normalization_warnings = 0


@dataclass(frozen=True, eq=False)
class Pose7:
    """A rigid alignment stored as a unit quaternion (qw, qx, qy, qz) and a
    translation. Applying the pose maps p to R(q) p + t.
    """

    q: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64))
        if self.q.shape != (4,) or self.t.shape != (3,):
            raise DomainError(
                f"Pose7 expects a 4D quaternion and 3D translation, got " +
                f"shapes {self.q.shape} and {self.t.shape}")

    @staticmethod
    def identity() -> "Pose7":
        return Pose7()

    @staticmethod
    def from_vector(vector: Union[np.ndarray, list[float]]) -> "Pose7":
        """Builds a pose from a raw 7D vector (quaternion first).

        The quaternion part is normalized; a quaternion of (near) zero length
        maps to the identity rotation.
        """
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (7,):
            raise DomainError(f"Expected a 7D alignment, got {vector.shape}")
        return Pose7(normalize_quaternion(vector[:4]), vector[4:].copy())

    @staticmethod
    def from_rotation(rotation: Rotation,
                      t: Union[np.ndarray, None] = None) -> "Pose7":
        q = np.roll(rotation.as_quat(), 1)
        return Pose7(normalize_quaternion(q),
                     np.zeros(3) if t is None else np.asarray(t))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.t])

    def rotation(self) -> Rotation:
        return Rotation.from_quat(np.roll(self.q, -1))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.q, [1.0, 0.0, 0.0, 0.0]) and
                    not np.any(self.t))

    def allclose(self, other: "Pose7", atol: float = 1e-6) -> bool:
        """Compares two poses, treating q and -q as the same rotation."""
        same_rotation = np.allclose(self.q, other.q, atol=atol) or \
            np.allclose(self.q, -other.q, atol=atol)
        return bool(same_rotation and np.allclose(self.t, other.t, atol=atol))

    def __repr__(self) -> str:
        return f"Pose7(q={np.round(self.q, 6).tolist()}, " + \
            f"t={np.round(self.t, 6).tolist()})"


def normalize_quaternion(q: np.ndarray) -> np.ndarray:
    """Returns q scaled to unit length with qw >= 0.

    A zero quaternion has no direction and is mapped to the identity.
    """
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise DomainError(f"Non-finite quaternion {q}")
    norm = np.linalg.norm(q)
    if norm < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    q = q / norm
    if q[0] < 0:
        q = -q
    return q


def normalization_warning_count() -> int:
    """Number of times `pose_apply` has had to re-normalize a quaternion."""
    return _normalization_warnings


def _checked_rotation(pose: Pose7) -> np.ndarray:
    global _normalization_warnings
    norm = np.linalg.norm(pose.q)
    q = pose.q
    if abs(norm - 1.0) > QUATERNION_TOLERANCE:
        with _warning_lock:
            _normalization_warnings += 1
        logger.warning("Re-normalizing quaternion %s with norm %.8f",
                       pose.q, norm)
        q = normalize_quaternion(q)
    return Rotation.from_quat(np.roll(q, -1)).as_matrix()


def pose_apply(pose: Pose7, pc: PointCloud) -> PointCloud:
    """Applies a rigid pose to a point cloud.

    Parameters
    ----------
    pose : Pose7
        The pose to apply. A quaternion that is not unit length (beyond
        1e-6) is normalized and counted as a warning.
    pc : PointCloud
        The cloud to transform. Normals are rotated but not translated.

    Returns
    -------
    PointCloud
        The transformed cloud.
    """
    rotation = _checked_rotation(pose)
    points = pc.points @ rotation.T + pose.t
    normals = None if pc.normals is None else pc.normals @ rotation.T
    return PointCloud(points, normals, pc.degenerate)


def transform_points(pose: Pose7, points: np.ndarray) -> np.ndarray:
    return pose_apply(pose, PointCloud(points)).points


def pose_compose(a: Pose7, b: Pose7) -> Pose7:
    """Returns the pose equivalent to applying b and then a."""
    rotation = a.rotation() * b.rotation()
    return Pose7.from_rotation(rotation, a.rotation().apply(b.t) + a.t)


def pose_inverse(a: Pose7) -> Pose7:
    inverse = a.rotation().inv()
    return Pose7.from_rotation(inverse, -inverse.apply(a.t))


def rotation_error_deg(a: Pose7, b: Pose7) -> float:
    """Geodesic angle in degrees between the rotations of two poses.

    q and -q describe the same rotation and give an error of 0.
    """
    qa = normalize_quaternion(a.q)
    qb = normalize_quaternion(b.q)
    cosine = abs(float(np.dot(qa, qb)))
    # atan2 keeps precision for nearly equal rotations where arccos does not
    angle = 2.0 * np.degrees(np.arctan2(_half_angle_sine(qa, qb), cosine))
    return float(min(max(angle, 0.0), 180.0))


def _half_angle_sine(qa: np.ndarray, qb: np.ndarray) -> float:
    # vector part of the relative quaternion conj(qa) * qb
    wa, va = qa[0], qa[1:]
    wb, vb = qb[0], qb[1:]
    vector = wa * vb - wb * va - np.cross(va, vb)
    return float(np.linalg.norm(vector))


def translation_error(a: Pose7, b: Pose7) -> float:
    return float(np.linalg.norm(a.t - b.t))


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Draws a rotation uniformly from SO(3)."""
    return Rotation.random(random_state=rng)
