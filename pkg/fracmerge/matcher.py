
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MatchSet:
    """Matched point indices between two clouds: point `indices_f[k]` of the
    first cloud matches point `indices_g[k]` of the second."""

    indices_f: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64))
    indices_g: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.indices_f.shape[0])


class PointMatcher:
    """Interface for finding corresponding points between two unposed
    clouds."""

    def describe(self, cloud: np.ndarray) -> np.ndarray:
        """Computes one descriptor per point.

        Parameters
        ----------
        cloud : np.ndarray
            An (N, 3) cloud.

        Returns
        -------
        np.ndarray
            (N, D) descriptors.
        """
        raise NotImplementedError()

    def match(self, descriptors_f: np.ndarray,
              descriptors_g: np.ndarray) -> MatchSet:
        """Matches two sets of descriptors; may return an empty set."""
        raise NotImplementedError()


def compute_matches(matcher: PointMatcher, cloud_f: np.ndarray,
                    cloud_g: np.ndarray) -> MatchSet:
    return matcher.match(matcher.describe(cloud_f), matcher.describe(cloud_g))
