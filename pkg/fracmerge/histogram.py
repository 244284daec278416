
import numpy as np

from fracmerge.matcher import MatchSet
from fracmerge.pose import Pose7, transform_points

HISTOGRAM_EDGES = (0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, np.inf)
HISTOGRAM_SIZE = len(HISTOGRAM_EDGES)


def match_distance_histogram(matches: MatchSet, cloud_f: np.ndarray,
                             cloud_g: np.ndarray, pose_f: Pose7,
                             pose_g: Pose7) -> np.ndarray:
    """Histogram of the distances between matched points after posing.

    Parameters
    ----------
    matches : MatchSet
        Matches between the unposed clouds.
    cloud_f, cloud_g : np.ndarray
        The unposed clouds the match indices refer to.
    pose_f, pose_g : Pose7
        Current pose estimates of the two clouds.

    Returns
    -------
    np.ndarray
        Six bins with edges (0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, inf),
        normalized to sum to 1 when there are matches, followed by the raw
        match count. Zero matches give seven zeros.
    """
    features = np.zeros(HISTOGRAM_SIZE)
    if len(matches) == 0:
        return features
    posed_f = transform_points(pose_f, cloud_f[matches.indices_f])
    posed_g = transform_points(pose_g, cloud_g[matches.indices_g])
    distances = np.linalg.norm(posed_f - posed_g, axis=1)
    return histogram_features(distances)


def histogram_features(distances: np.ndarray) -> np.ndarray:
    """Bins already computed match distances; see match_distance_histogram."""
    features = np.zeros(HISTOGRAM_SIZE)
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size == 0:
        return features
    bins = np.searchsorted(HISTOGRAM_EDGES[1:-1], distances, side="right")
    counts = np.bincount(bins, minlength=HISTOGRAM_SIZE - 1)
    features[:-1] = counts / distances.size
    features[-1] = distances.size
    return features
