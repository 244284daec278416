
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from fracmerge.alignment_solver import AlignmentSolver
from fracmerge.assembly_state import AssemblyState, FragmentGroup, MergeRecord
from fracmerge.contract_violation import ContractViolation
from fracmerge.fragment_record import POINTS_PER_FRAGMENT, AssemblySample
from fracmerge.inner_surface import (INNER_SURFACE_DISTANCE, outward_normals,
                                     remove_inner_surface_points)
from fracmerge.normals import DEFAULT_NORMAL_NEIGHBORS
from fracmerge.pair_scorer import PairScorer
from fracmerge.pair_verifier import all_pairs
from fracmerge.pose import Pose7, pose_compose, pose_inverse
from fracmerge.sampling import resample_points

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 6
MERGE_THRESHOLD = 0.9


@dataclass
class AssemblyConfig:
    max_iterations: int = MAX_ITERATIONS
    merge_threshold: float = MERGE_THRESHOLD
    inner_distance: float = INNER_SURFACE_DISTANCE
    normal_neighbors: int = DEFAULT_NORMAL_NEIGHBORS


@dataclass(frozen=True)
class IterationRecord:
    """What one denoise, verify and merge round left behind."""

    iteration: int
    group_count: int
    component_count: int
    merges: tuple[MergeRecord, ...]
    fragment_poses: tuple[Pose7, ...]
    seconds: float = 0.0


@dataclass
class AssemblyResult:
    poses: list[Pose7]
    anchor_id: int
    provenance: list[MergeRecord]
    iterations: list[IterationRecord] = field(default_factory=list)
    state: Optional[AssemblyState] = None

    def _record_at(self, iteration: int) -> Optional[IterationRecord]:
        if not self.iterations:
            return None
        index = min(iteration, len(self.iterations)) - 1
        return self.iterations[max(index, 0)]

    def poses_at(self, iteration: int) -> list[Pose7]:
        """Fragment poses as they were after `iteration` rounds. Runs that
        stopped earlier keep their final poses."""
        record = self._record_at(iteration)
        return list(self.poses if record is None else record.fragment_poses)

    def seconds_at(self, iteration: int) -> float:
        record = self._record_at(iteration)
        return 0.0 if record is None else record.seconds


def _union_groups(a: FragmentGroup, b: FragmentGroup, uid: int,
                  config: AssemblyConfig) -> FragmentGroup:
    filtered_a, filtered_b = remove_inner_surface_points(
        outward_normals(a.posed_cloud(), config.normal_neighbors),
        outward_normals(b.posed_cloud(), config.normal_neighbors),
        config.inner_distance)
    union = np.concatenate([filtered_a.points, filtered_b.points])
    if len(union) < POINTS_PER_FRAGMENT:
        logger.debug("Padding group %d from %d to %d points by repeating "
                     "samples", uid, len(union), POINTS_PER_FRAGMENT)
    merged = union[resample_points(union, POINTS_PER_FRAGMENT)]
    center = merged.mean(axis=0)
    pose = Pose7(t=center)
    to_group = pose_inverse(pose)
    member_poses = {
        m: pose_compose(to_group, group.fragment_pose(m))
        for group in (a, b) for m in group.members}
    return FragmentGroup(uid, tuple(sorted(a.members + b.members)),
                         merged - center, member_poses, pose)


def merge_pair(state: AssemblyState, uid_i: int, uid_j: int,
               iteration: int = 0, score: float = 1.0,
               config: Optional[AssemblyConfig] = None) -> AssemblyState:
    """Merges two verified groups in place.

    Two non-anchor groups are posed into the common frame, stripped of their
    inner surface points, unioned and resampled to 1000 points around the
    new center of mass. A group verified against an anchor is frozen at its
    current pose and becomes an anchor itself, its cloud kept separate. Two
    anchors are left as they are.

    Parameters
    ----------
    state : AssemblyState
        The assembly being agglomerated.
    uid_i, uid_j : int
        The groups to merge.
    iteration : int, optional
        Recorded in the provenance log.
    score : float, optional
        Verifier probability, recorded in the provenance log.
    config : Optional[AssemblyConfig], optional
        Inner surface distance and normal neighbourhood size.

    Returns
    -------
    AssemblyState
        `state`, for chaining.
    """
    config = config or AssemblyConfig()
    a, b = state.group(uid_i), state.group(uid_j)
    if a.anchor and b.anchor:
        return state
    if a.anchor or b.anchor:
        frozen = (b if a.anchor else a).baked()
        state.replace_groups([frozen.uid], [frozen])
        state.join_components(a, b)
        state.provenance.append(
            MergeRecord(iteration, (uid_i, uid_j), score, frozen.uid,
                        "anchor"))
        logger.debug("Group %d frozen against an anchor", frozen.uid)
        return state
    try:
        merged = _union_groups(a, b, state.new_uid(), config)
    except ContractViolation as e:
        logger.warning("Skipped merge of groups %d and %d: %s", uid_i, uid_j,
                       e)
        return state
    state.replace_groups([uid_i, uid_j], [merged])
    state.provenance.append(
        MergeRecord(iteration, (uid_i, uid_j), score, merged.uid, "union"))
    logger.debug("Groups %d and %d merged into %d", uid_i, uid_j, merged.uid)
    return state


def merge_candidates(state: AssemblyState, scores: np.ndarray,
                     threshold: float) -> list[tuple[float, int, int]]:
    """Pairs scoring above `threshold`, best first, ties by group ids; pairs
    of two anchors are left out."""
    candidates = []
    for (i, j), score in zip(all_pairs(len(state.groups)), scores):
        a, b = state.groups[i], state.groups[j]
        if score > threshold and not (a.anchor and b.anchor):
            candidates.append((float(score), a.uid, b.uid))
    return sorted(candidates, key=lambda c: (-c[0], c[1], c[2]))


def _merge_round(state: AssemblyState, scores: np.ndarray,
                 config: AssemblyConfig) -> list[MergeRecord]:
    before = len(state.provenance)
    used: set[int] = set()
    for score, uid_i, uid_j in merge_candidates(state, scores,
                                                config.merge_threshold):
        if uid_i in used or uid_j in used:
            continue
        used.update((uid_i, uid_j))
        merge_pair(state, uid_i, uid_j, state.iteration, score, config)
    return state.provenance[before:]


def assemble(assembly: AssemblySample, solver: AlignmentSolver,
             scorer: PairScorer, config: Optional[AssemblyConfig] = None,
             rng: Optional[np.random.Generator] = None,
             anchor_id: Optional[int] = None) -> AssemblyResult:
    """Assembles the fragments of one prepared test sample.

    Each round estimates the pose of every group, scores all pairs of groups
    and merges the verified ones, best first, every group in at most one
    merge. Rounds repeat until everything forms one component, no non-anchor
    group is left or `max_iterations` rounds have run.

    Parameters
    ----------
    assembly : AssemblySample
        Fragments in their own local frames.
    solver : AlignmentSolver
        Pose estimator, e.g. the diffusion model.
    scorer : PairScorer
        Pair verifier.
    config : Optional[AssemblyConfig], optional
        Iteration count, merge threshold and merge settings.
    rng : Optional[np.random.Generator], optional
        Source of randomness for the solver.
    anchor_id : Optional[int], optional
        Anchor fragment; the largest fragment by default.

    Returns
    -------
    AssemblyResult
        Final pose of every fragment, the merge log and per-round records.
    """
    config = config or AssemblyConfig()
    rng = rng if rng is not None else np.random.default_rng()
    state = AssemblyState.from_assembly(assembly, anchor_id)
    anchor = next(g.members[0] for g in state.groups if g.anchor)
    result = AssemblyResult(state.fragment_poses(), anchor, state.provenance,
                            state=state)
    start = time.perf_counter()
    for iteration in range(1, config.max_iterations + 1):
        if state.anchor_mask().all():
            break
        state.iteration = iteration
        state.set_poses(solver.solve(state.groups, rng))
        merges = _merge_round(state, scorer.score(state.groups), config)
        state.check_invariants()
        result.iterations.append(IterationRecord(
            iteration, len(state.groups), state.component_count(),
            tuple(merges), tuple(state.fragment_poses()),
            time.perf_counter() - start))
        logger.info("%s iteration %d: %d merges, %d groups, %d components",
                    assembly.name, iteration, len(merges), len(state.groups),
                    state.component_count())
        if state.component_count() == 1:
            break
    result.poses = state.fragment_poses()
    return result

