
from typing import Optional, Sequence

import numpy as np

from fracmerge.contacts import contact_neighbors
from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import AssemblySample, FragmentRecord

NEIGHBOR_ANCHOR_PROBABILITY = 0.5


def select_anchor(fragments: Sequence[FragmentRecord]) -> int:
    """Returns the id of the largest fragment, measured by the longest side of
    its bounding box before normalization. Ties go to the lowest id."""
    if len(fragments) == 0:
        raise DomainError("Cannot select an anchor from no fragments")
    # max() keeps the first maximal element, so ties resolve to the lowest id
    ordered = sorted(fragments, key=lambda fragment: fragment.id)
    return max(ordered, key=lambda fragment: fragment.scale).id


def sample_training_anchors(
        assembly: AssemblySample, rng: np.random.Generator,
        neighbors: Optional[dict[int, set[int]]] = None,
        probability: float = NEIGHBOR_ANCHOR_PROBABILITY) -> set[int]:
    """Draws the anchor set used for one training example: the largest
    fragment plus each of its ground-truth contact neighbours independently
    with the given probability.

    Parameters
    ----------
    assembly : AssemblySample
        The assembly, with ground-truth poses.
    rng : np.random.Generator
        Source of the neighbour coin flips.
    neighbors : Optional[dict[int, set[int]]], optional
        Precomputed contact relation; computed from the assembly if omitted.
    probability : float, optional
        Inclusion probability of each neighbour.

    Returns
    -------
    set[int]
        Ids of the anchor fragments.
    """
    largest = select_anchor(assembly.fragments)
    if neighbors is None:
        neighbors = contact_neighbors(assembly)
    anchors = {largest}
    for neighbor in sorted(neighbors.get(largest, set())):
        if rng.random() < probability:
            anchors.add(neighbor)
    return anchors
