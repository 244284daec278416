
import numpy as np
import torch
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from fracmerge.fragment_autoencoder import FrozenEncoder
from fracmerge.matcher import MatchSet, PointMatcher

RATIO_TEST = 0.9
INTERPOLATION_NEIGHBORS = 3
_EPS = 1e-8


class LatentMatcher(PointMatcher):
    """Matches points by their interpolated point latents.

    Each cloud is normalized and encoded by the frozen encoder; every point
    gets the inverse-distance weighted mix of the latents of its three
    nearest centers. Matches are mutual nearest neighbours in descriptor
    space that also pass a ratio test (best distance below `ratio` times the
    second best).
    """

    _encoder: FrozenEncoder
    _ratio: float

    def __init__(self, encoder: FrozenEncoder, ratio: float = RATIO_TEST):
        self._encoder = encoder
        self._ratio = ratio

    def describe(self, cloud: np.ndarray) -> np.ndarray:
        cloud = np.asarray(cloud, dtype=np.float64)
        com = cloud.mean(axis=0)
        extent = max(float(np.ptp(cloud, axis=0).max()), _EPS)
        normalized = (cloud - com) / extent
        xyz = torch.as_tensor(normalized, dtype=torch.float32).unsqueeze(0)
        centers, latents = self._encoder.encode(xyz)
        centers = centers[0].cpu().numpy().astype(np.float64)
        latents = latents[0].cpu().numpy().astype(np.float64)
        k = min(INTERPOLATION_NEIGHBORS, len(centers))
        distances, indices = cKDTree(centers).query(normalized, k=k)
        distances = distances.reshape(len(normalized), k)
        indices = indices.reshape(len(normalized), k)
        weights = 1.0 / (distances + _EPS)
        weights /= weights.sum(axis=1, keepdims=True)
        return np.einsum("nk,nkd->nd", weights, latents[indices])

    def match(self, descriptors_f: np.ndarray,
              descriptors_g: np.ndarray) -> MatchSet:
        if len(descriptors_f) == 0 or len(descriptors_g) == 0:
            return MatchSet()
        distances = cdist(descriptors_f, descriptors_g)
        nearest_g = distances.argmin(axis=1)
        nearest_f = distances.argmin(axis=0)
        rows = np.arange(len(descriptors_f))
        keep = nearest_f[nearest_g] == rows
        if distances.shape[1] > 1:
            two_best = np.partition(distances, 1, axis=1)[:, :2]
            keep &= two_best[:, 0] < self._ratio * two_best[:, 1]
        return MatchSet(rows[keep], nearest_g[keep])
