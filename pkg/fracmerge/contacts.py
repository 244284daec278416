
import numpy as np
from scipy.spatial import cKDTree

from fracmerge.fragment_record import AssemblySample

CONTACT_EPSILON = 0.02


def contact_neighbors(assembly: AssemblySample,
                      epsilon: float = CONTACT_EPSILON) -> dict[int, set[int]]:
    """Fragments f and g are neighbours when, posed by their ground-truth
    poses, some point of f is closer than epsilon to some point of g. The
    relation is symmetric by construction."""
    posed = [fragment.posed_points() for fragment in assembly.fragments]
    trees = [cKDTree(points) for points in posed]
    neighbors: dict[int, set[int]] = {f.id: set() for f in assembly.fragments}
    for i in range(len(posed)):
        for j in range(i + 1, len(posed)):
            distances, _ = trees[j].query(posed[i], k=1)
            if np.min(distances) < epsilon:
                neighbors[i].add(j)
                neighbors[j].add(i)
    return neighbors
