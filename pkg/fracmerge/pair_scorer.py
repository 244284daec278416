
from typing import Sequence

import numpy as np

from fracmerge.assembly_state import FragmentGroup
from fracmerge.matcher import PointMatcher
from fracmerge.pair_verifier import PairVerifier, build_pair_nodes


class PairScorer:
    """Interface for scoring how likely each pair of groups is correctly
    aligned."""

    def score(self, groups: Sequence[FragmentGroup]) -> np.ndarray:
        """Scores every pair of groups under their current poses.

        Parameters
        ----------
        groups : Sequence[FragmentGroup]
            The current groups.

        Returns
        -------
        np.ndarray
            One probability per pair (i, j), i < j, of positions in `groups`,
            in `all_pairs` order.
        """
        raise NotImplementedError()


class VerifierPairScorer(PairScorer):
    """Pair scorer backed by the trained verifier and a point matcher."""

    _model: PairVerifier
    _matcher: PointMatcher

    def __init__(self, model: PairVerifier, matcher: PointMatcher):
        self._model = model.eval()
        self._matcher = matcher

    def score(self, groups: Sequence[FragmentGroup]) -> np.ndarray:
        nodes = build_pair_nodes([group.cloud for group in groups],
                                 [group.pose for group in groups],
                                 self._matcher)
        return self._model.predict(nodes)
