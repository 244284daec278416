
from typing import Iterable, Optional

import numpy as np
import trimesh
from scipy.spatial.transform import Rotation

from fracmerge.anchors import select_anchor
from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import (POINTS_PER_FRAGMENT, AssemblySample,
                                       FragmentRecord)
from fracmerge.point_cloud import PointCloud
from fracmerge.pose import (Pose7, pose_apply, pose_compose, random_rotation,
                            transform_points)

_MIN_AREA = 1e-12


def sample_fragment_points(mesh: trimesh.Trimesh,
                           count: int = POINTS_PER_FRAGMENT,
                           seed: Optional[int] = None) -> PointCloud:
    """Samples points uniformly (area-weighted) on a mesh surface, with the
    normal of the face each point came from.

    Parameters
    ----------
    mesh : trimesh.Trimesh
        Mesh with positive surface area.
    count : int, optional
        Number of samples, 1000 by default.
    seed : Optional[int], optional
        Seed for the sampler.

    Returns
    -------
    PointCloud
        The samples and their face normals.
    """
    if len(mesh.faces) == 0 or mesh.area <= _MIN_AREA:
        raise DomainError("Cannot sample points from a zero-area mesh")
    points, face_index = trimesh.sample.sample_surface(mesh, count, seed=seed)
    return PointCloud(np.asarray(points), mesh.face_normals[face_index])


def normalize_fragment(pc: PointCloud) -> tuple[PointCloud, float, np.ndarray]:
    """Moves the center of mass to the origin and scales the longest side of
    the bounding box to 1.

    Returns the normalized cloud, the original longest side (`scale`) and
    the original center of mass (`offset`), so that
    `original = normalized * scale + offset`.
    """
    if len(pc) == 0:
        raise DomainError("Cannot normalize an empty cloud")
    offset = pc.center_of_mass()
    scale = pc.longest_extent()
    if scale <= 0:
        raise DomainError("Cannot normalize a cloud of coincident points")
    normalized = PointCloud((pc.points - offset) / scale, pc.normals)
    return normalized, scale, offset


def fragment_from_cloud(fragment_id: int,
                        assembly_cloud: PointCloud) -> FragmentRecord:
    """Builds a fragment record from points sampled in the assembly frame; the
    ground-truth pose is the translation back to where the fragment was."""
    normalized, scale, offset = normalize_fragment(assembly_cloud)
    return FragmentRecord(fragment_id, normalized.points, scale,
                          Pose7(t=offset), normalized.normals)


def build_assembly(fragment_meshes: list[trimesh.Trimesh], object_id: str,
                   fracture_id: str, split: str,
                   seed: int = 0) -> AssemblySample:
    fragments = [
        fragment_from_cloud(i, sample_fragment_points(mesh, seed=seed + i))
        for i, mesh in enumerate(fragment_meshes)]
    return AssemblySample(fragments, object_id, fracture_id, split)


def rotate_fragment(fragment: FragmentRecord,
                    rotation: Rotation) -> FragmentRecord:
    """Re-expresses a fragment in a rotated local frame.

    The rotated cloud is re-normalized (so `scale` changes with the new
    bounding box) and the ground-truth pose is updated so the fragment still
    lands in the same place in the assembly frame.
    """
    rotated = pose_apply(Pose7.from_rotation(rotation),
                         fragment.local_cloud())
    normalized, scale, offset = normalize_fragment(rotated)
    inverse = rotation.inv()
    correction = Pose7.from_rotation(inverse, inverse.apply(offset))
    return FragmentRecord(fragment.id, normalized.points, scale,
                          pose_compose(fragment.gt_pose, correction),
                          normalized.normals)


def randomize_local_frames(assembly: AssemblySample, rng: np.random.Generator,
                           fragment_ids: Optional[Iterable[int]] = None
                           ) -> AssemblySample:
    """Rotates the local frame of each selected fragment (all by default) by
    an independent uniformly random rotation."""
    selected = set(range(len(assembly)) if fragment_ids is None
                   else fragment_ids)
    fragments = [
        rotate_fragment(fragment, random_rotation(rng))
        if fragment.id in selected else fragment
        for fragment in assembly.fragments]
    return assembly.with_fragments(fragments)


def prepare_training_sample(assembly: AssemblySample,
                            rng: np.random.Generator,
                            anchor_id: Optional[int] = None
                            ) -> AssemblySample:
    """Applies one random rotation to the whole assembly, then translates it
    so the anchor fragment's center of mass sits at the origin.

    Parameters
    ----------
    assembly : AssemblySample
        Assembly with ground-truth poses.
    rng : np.random.Generator
        Source of the random rotation.
    anchor_id : Optional[int], optional
        Anchor fragment; the largest fragment by default.

    Returns
    -------
    AssemblySample
        The same fragments with jointly moved ground-truth poses.
    """
    if anchor_id is None:
        anchor_id = select_anchor(assembly.fragments)
    rotation = Pose7.from_rotation(random_rotation(rng))
    poses = [pose_compose(rotation, pose) for pose in assembly.gt_poses()]
    anchor = assembly.fragments[anchor_id]
    center = transform_points(poses[anchor_id],
                              anchor.local_points()).mean(axis=0)
    shift = Pose7(t=-center)
    fragments = [
        fragment.with_pose(pose_compose(shift, pose))
        for fragment, pose in zip(assembly.fragments, poses)]
    return assembly.with_fragments(fragments)


def prepare_test_sample(assembly: AssemblySample,
                        rng: np.random.Generator) -> AssemblySample:
    """Hides the ground truth: every fragment gets its own random rotation
    and stays centered on its center of mass. Ground-truth poses are kept on
    the records for scoring only."""
    return randomize_local_frames(assembly, rng)
