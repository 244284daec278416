
from typing import Sequence

import numpy as np
import torch
import trimesh

from fracmerge.alignment_solver import AlignmentSolver
from fracmerge.assembly_state import FragmentGroup
from fracmerge.denoise_transformer import DenoiserConfig
from fracmerge.fragment_autoencoder import (EncoderConfig,
                                            FragmentAutoencoder,
                                            FrozenEncoder)
from fracmerge.fragment_record import AssemblySample
from fracmerge.matcher import MatchSet, PointMatcher
from fracmerge.pair_scorer import PairScorer
from fracmerge.pair_verifier import VerifierConfig, all_pairs, make_pair_labels
from fracmerge.point_cloud import PointCloud
from fracmerge.pose import Pose7, pose_compose, pose_inverse
from fracmerge.preprocessing import build_assembly

SLAB_WIDTH = 0.25


def slab_meshes(count: int = 4) -> list[trimesh.Trimesh]:
    """Boxes cut from a unit cube along x. The first one is taller, so it is
    always the largest fragment."""
    meshes = []
    for i in range(count):
        height = 1.2 if i == 0 else 1.0
        box = trimesh.creation.box(extents=(SLAB_WIDTH, height, 1.0))
        box.apply_translation((SLAB_WIDTH * (i - (count - 1) / 2), 0, 0))
        meshes.append(box)
    return meshes


def slab_assembly(count: int = 4, seed: int = 0,
                  split: str = "test") -> AssemblySample:
    return build_assembly(slab_meshes(count), "slab", "fracture-00", split,
                          seed=seed)


def face_grid_cube(low: Sequence[float], grid: int = 10) -> PointCloud:
    """Cell-centred grid on each face of the unit cube at `low`, with exact
    outward normals."""
    low = np.asarray(low, dtype=np.float64)
    ticks = (np.arange(grid) + 0.5) / grid
    u, v = [a.reshape(-1) for a in np.meshgrid(ticks, ticks)]
    points, normals = [], []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for side in (0.0, 1.0):
            face = np.zeros((grid * grid, 3))
            face[:, axis] = side
            face[:, others[0]] = u
            face[:, others[1]] = v
            normal = np.zeros(3)
            normal[axis] = 1.0 if side else -1.0
            points.append(face + low)
            normals.append(np.tile(normal, (grid * grid, 1)))
    return PointCloud(np.concatenate(points), np.concatenate(normals))


def ground_truth_group_pose(group: FragmentGroup, gt_poses: Sequence[Pose7],
                            anchor_id: int) -> Pose7:
    """The group pose that puts every member where it belongs relative to
    the anchor fragment."""
    member = group.members[0]
    to_anchor = pose_inverse(gt_poses[anchor_id])
    return pose_compose(pose_compose(to_anchor, gt_poses[member]),
                        pose_inverse(group.member_poses[member]))


class OracleSolver(AlignmentSolver):
    """Returns ground-truth poses relative to the anchor fragment."""

    def __init__(self, sample: AssemblySample, anchor_id: int):
        self._gt = sample.gt_poses()
        self._anchor_id = anchor_id
        self.calls = 0

    def solve(self, groups, rng):
        self.calls += 1
        return [Pose7.identity() if group.anchor else
                ground_truth_group_pose(group, self._gt, self._anchor_id)
                for group in groups]


class IdentitySolver(AlignmentSolver):
    """Leaves every group where it is."""

    def solve(self, groups, rng):
        return [Pose7.identity() for _ in groups]


class ConstantScorer(PairScorer):

    def __init__(self, value: float):
        self._value = value

    def score(self, groups):
        return np.full(len(all_pairs(len(groups))), self._value)


class IndexMatcher(PointMatcher):
    """Matches point k of one cloud with point k of the other."""

    def describe(self, cloud):
        return np.arange(len(cloud), dtype=np.float64)[:, None]

    def match(self, descriptors_f, descriptors_g):
        n = min(len(descriptors_f), len(descriptors_g))
        return MatchSet(np.arange(n), np.arange(n))


def tiny_encoder(seed: int = 0) -> FrozenEncoder:
    torch.manual_seed(seed)
    return FrozenEncoder(FragmentAutoencoder(EncoderConfig(num_codes=32)))


def tiny_denoiser_config() -> DenoiserConfig:
    return DenoiserConfig(hidden_size=32, num_heads=4, num_layers=1)


def tiny_verifier_config() -> VerifierConfig:
    return VerifierConfig(hidden_size=32, num_heads=4, num_layers=1,
                          index_encoding_size=16)


class GroundTruthScorer(PairScorer):
    """Scores a pair of groups 1 when their current poses agree with the
    ground truth, 0 otherwise."""

    def __init__(self, sample: AssemblySample):
        self._gt = sample.gt_poses()

    def score(self, groups):
        leads = [group.members[0] for group in groups]
        predicted = [group.fragment_pose(m) for group, m in zip(groups, leads)]
        labels = make_pair_labels(predicted, [self._gt[m] for m in leads])
        return labels.astype(np.float64)
