
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from networkx.utils import UnionFind

from fracmerge.anchors import select_anchor
from fracmerge.contract_violation import ContractViolation
from fracmerge.fragment_record import POINTS_PER_FRAGMENT, AssemblySample
from fracmerge.pose import Pose7, pose_compose, transform_points

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FragmentGroup:
    """A set of original fragments handled as one piece.

    `cloud` is in object units: in the group's own frame (centered on its
    center of mass) for a non-anchor, in the assembly frame for an anchor.
    `member_poses[m]` maps fragment m's local points into the group frame and
    `pose` maps the group frame into the assembly frame.
    """

    uid: int
    members: tuple[int, ...]
    cloud: np.ndarray
    member_poses: dict[int, Pose7]
    pose: Pose7 = field(default_factory=Pose7.identity)
    anchor: bool = False

    def fragment_pose(self, member: int) -> Pose7:
        return pose_compose(self.pose, self.member_poses[member])

    def posed_cloud(self) -> np.ndarray:
        return transform_points(self.pose, self.cloud)

    def baked(self) -> "FragmentGroup":
        """The same group turned into an anchor: its current pose is applied
        to its cloud and member poses, and reset to the identity."""
        if self.anchor:
            return self
        return replace(
            self, cloud=self.posed_cloud(),
            member_poses={m: self.fragment_pose(m) for m in self.members},
            pose=Pose7.identity(), anchor=True)


@dataclass(frozen=True)
class MergeRecord:
    iteration: int
    pair: tuple[int, int]
    score: float
    result: int
    kind: str


class AssemblyState:
    """The groups of one assembly during agglomeration, the merges that
    formed them and the connected components they belong to.

    Anchor groups are never unioned with other clouds, so components are
    tracked separately: a fragment that joins an anchor shares the anchor's
    component while keeping its own group.
    """

    groups: list[FragmentGroup]
    iteration: int
    provenance: list[MergeRecord]
    _components: UnionFind
    _fragment_count: int
    _next_uid: int

    def __init__(self, groups: Sequence[FragmentGroup]):
        self.groups = list(groups)
        self.iteration = 0
        self.provenance = []
        self._fragment_count = sum(len(g.members) for g in self.groups)
        self._components = UnionFind(range(self._fragment_count))
        for group in self.groups:
            self._components.union(*group.members)
        self._next_uid = max(g.uid for g in self.groups) + 1
        self.check_invariants()

    @staticmethod
    def from_assembly(assembly: AssemblySample,
                      anchor_id: Optional[int] = None) -> "AssemblyState":
        """One group per fragment, with the largest fragment (or `anchor_id`)
        as the anchor. Every fragment starts in its own local frame."""
        if anchor_id is None:
            anchor_id = select_anchor(assembly.fragments)
        groups = [
            FragmentGroup(fragment.id, (fragment.id,),
                          fragment.local_points(),
                          {fragment.id: Pose7.identity()},
                          anchor=fragment.id == anchor_id)
            for fragment in assembly.fragments]
        return AssemblyState(groups)

    def group(self, uid: int) -> FragmentGroup:
        for group in self.groups:
            if group.uid == uid:
                return group
        raise KeyError(uid)

    def new_uid(self) -> int:
        uid = self._next_uid
        self._next_uid += 1
        return uid

    def replace_groups(self, removed: Sequence[int],
                       added: Sequence[FragmentGroup]) -> None:
        self.groups = [g for g in self.groups if g.uid not in removed]
        self.groups.extend(added)
        for group in added:
            self._components.union(*group.members)

    def join_components(self, a: FragmentGroup, b: FragmentGroup) -> None:
        self._components.union(a.members[0], b.members[0])

    def set_poses(self, poses: Sequence[Pose7]) -> None:
        """Stores new estimates, one per group in `groups` order. Anchors
        must receive the identity."""
        if len(poses) != len(self.groups):
            raise ContractViolation(
                f"Got {len(poses)} poses for {len(self.groups)} groups")
        for pose, group in zip(poses, self.groups):
            if group.anchor and not pose.is_identity():
                raise ContractViolation(
                    f"Anchor group {group.uid} received pose {pose}")
        self.groups = [group if group.anchor else replace(group, pose=pose)
                       for group, pose in zip(self.groups, poses)]

    def anchor_mask(self) -> np.ndarray:
        return np.array([group.anchor for group in self.groups])

    def components(self) -> list[set[int]]:
        return sorted((set(c) for c in self._components.to_sets()),
                      key=min)

    def component_count(self) -> int:
        return len(self.components())

    def fragment_poses(self) -> list[Pose7]:
        """Current pose of every original fragment, by fragment id."""
        poses: list[Optional[Pose7]] = [None] * self._fragment_count
        for group in self.groups:
            for member in group.members:
                poses[member] = group.fragment_pose(member)
        return poses  # type: ignore[return-value]

    def check_invariants(self) -> None:
        """Raises ContractViolation unless the groups partition the
        fragments, anchors sit at the identity and every non-anchor cloud
        has 1000 points."""
        members = sorted(m for group in self.groups for m in group.members)
        if members != list(range(self._fragment_count)):
            raise ContractViolation(
                f"Groups do not partition the fragments: {members}")
        for group in self.groups:
            if group.anchor and not group.pose.is_identity():
                raise ContractViolation(
                    f"Anchor group {group.uid} is not at the identity")
            if not group.anchor and \
                    group.cloud.shape != (POINTS_PER_FRAGMENT, 3):
                raise ContractViolation(
                    f"Group {group.uid} has {group.cloud.shape[0]} points")
            if set(group.member_poses) != set(group.members):
                raise ContractViolation(
                    f"Group {group.uid} member poses do not match members")
