
import logging
import math
import os
from typing import Optional, Sequence

import numpy as np
import trimesh
from tqdm import tqdm

from fracmerge.domain_error import DomainError
from fracmerge.file_system_assembly_store import FileSystemAssemblyStore
from fracmerge.fracture import (PRIMITIVE_SHAPES, normalize_mesh,
                                primitive_mesh, voronoi_fracture)
from fracmerge.fragment_record import (MAX_FRAGMENTS, MIN_FRAGMENTS,
                                       TEST_SPLIT, TRAIN_SPLIT, AssemblySample)
from fracmerge.preprocessing import build_assembly

logger = logging.getLogger(__name__)

TEST_FRACTION = 0.2
FRACTURES_PER_OBJECT = 2
_MAX_ATTEMPTS = 10


def _source_mesh(shape: str, rng: np.random.Generator) -> trimesh.Trimesh:
    if shape in PRIMITIVE_SHAPES:
        return primitive_mesh(shape, rng)
    if not os.path.exists(shape):
        raise DomainError(
            f"'{shape}' is neither a primitive ({', '.join(PRIMITIVE_SHAPES)})"
            + " nor a mesh file")
    return normalize_mesh(trimesh.load(shape, force="mesh"))


def _object_id(shape: str, index: int) -> str:
    stem = os.path.splitext(os.path.basename(shape))[0]
    return f"{stem}-{index:04d}"


def split_objects(object_ids: Sequence[str], rng: np.random.Generator,
                  test_fraction: float = TEST_FRACTION) -> dict[str, str]:
    """Assigns whole objects (never single fractures) to the train or test
    split."""
    order = rng.permutation(len(object_ids))
    n_test = int(round(test_fraction * len(object_ids)))
    if len(object_ids) > 1:
        n_test = min(max(n_test, 1), len(object_ids) - 1)
    splits = {}
    for rank, index in enumerate(order):
        splits[object_ids[index]] = TEST_SPLIT if rank < n_test \
            else TRAIN_SPLIT
    return splits


def fracture_assembly(mesh: trimesh.Trimesh, object_id: str,
                      fracture_id: str, split: str, min_frags: int,
                      max_frags: int, rng: np.random.Generator
                      ) -> AssemblySample:
    """Fractures one mesh into between min_frags and max_frags pieces and
    samples the pieces into an assembly."""
    for _ in range(_MAX_ATTEMPTS):
        n_cells = int(rng.integers(min_frags, max_frags + 1))
        seed = int(rng.integers(2 ** 31))
        fragments = voronoi_fracture(mesh, n_cells, seed)
        if len(fragments) >= MIN_FRAGMENTS:
            return build_assembly(fragments, object_id, fracture_id, split,
                                  seed=seed)
    raise DomainError(
        f"Could not fracture {object_id} into at least {MIN_FRAGMENTS} " +
        f"pieces after {_MAX_ATTEMPTS} attempts")


def generate_dataset(shapes: Sequence[str], min_frags: int, max_frags: int,
                     count: int, seed: int,
                     store: Optional[FileSystemAssemblyStore] = None,
                     fractures_per_object: int = FRACTURES_PER_OBJECT
                     ) -> list[AssemblySample]:
    """Generates a synthetic fracture dataset.

    Source objects cycle through `shapes` (primitive names or mesh file
    paths) with random proportions; each object is fractured
    `fractures_per_object` times, and objects are split 80/20 into train and
    test.

    Parameters
    ----------
    shapes : Sequence[str]
        Primitive names and/or mesh file paths.
    min_frags, max_frags : int
        Range of Voronoi seed counts, within 2..20.
    count : int
        Number of assemblies to generate.
    seed : int
        Seed for everything random.
    store : Optional[FileSystemAssemblyStore], optional
        If given, every assembly is written to it.
    fractures_per_object : int, optional
        Fractures generated per source object.

    Returns
    -------
    list[AssemblySample]
        The generated assemblies.
    """
    if not MIN_FRAGMENTS <= min_frags <= max_frags <= MAX_FRAGMENTS:
        raise DomainError(
            f"Fragment range {min_frags}-{max_frags} must lie within " +
            f"{MIN_FRAGMENTS}-{MAX_FRAGMENTS}")
    if not shapes:
        raise DomainError("No shapes given")
    rng = np.random.default_rng(seed)
    n_objects = math.ceil(count / fractures_per_object)
    object_ids = [_object_id(shapes[i % len(shapes)], i)
                  for i in range(n_objects)]
    splits = split_objects(object_ids, rng)
    assemblies: list[AssemblySample] = []
    progress = tqdm(range(count), desc="Generating assemblies")
    mesh: Optional[trimesh.Trimesh] = None
    for index in progress:
        object_index = index // fractures_per_object
        if index % fractures_per_object == 0:
            mesh = _source_mesh(shapes[object_index % len(shapes)], rng)
        assert mesh is not None
        object_id = object_ids[object_index]
        assembly = fracture_assembly(
            mesh, object_id, f"fracture-{index % fractures_per_object:02d}",
            splits[object_id], min_frags, max_frags, rng)
        if store is not None:
            store.put_assembly(assembly)
        assemblies.append(assembly)
        progress.set_description(
            f"Generated {assembly.name} ({len(assembly)} fragments)")
    logger.info("Generated %d assemblies from %d objects", len(assemblies),
                n_objects)
    return assemblies
