
from typing import Sequence

import numpy as np

from fracmerge.assembly_state import FragmentGroup
from fracmerge.pose import Pose7


class AlignmentSolver:
    """Interface for estimating the pose of every group of an assembly
    relative to its anchors."""

    def solve(self, groups: Sequence[FragmentGroup],
              rng: np.random.Generator) -> list[Pose7]:
        """Estimates one pose per group.

        Parameters
        ----------
        groups : Sequence[FragmentGroup]
            The current groups, at least one of them an anchor. Non-anchor
            clouds are in their own frame, anchor clouds in the assembly
            frame.
        rng : np.random.Generator
            Source of randomness.

        Returns
        -------
        list[Pose7]
            The pose mapping each group's frame into the assembly frame, in
            `groups` order; the identity for every anchor.
        """
        raise NotImplementedError()
