
import logging

import numpy as np
import trimesh

from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import MAX_FRAGMENTS

logger = logging.getLogger(__name__)

PRIMITIVE_SHAPES = ("cube", "sphere", "cylinder", "torus")
_MIN_FRAGMENT_VOLUME = 1e-6


def primitive_mesh(shape: str, rng: np.random.Generator) -> trimesh.Trimesh:
    """Builds a randomly proportioned primitive, normalized so its bounding box
    is centered at the origin with longest side 1."""
    if shape == "cube":
        mesh = trimesh.creation.box(extents=rng.uniform(0.5, 1.0, size=3))
    elif shape == "sphere":
        mesh = trimesh.creation.icosphere(subdivisions=3)
        stretch = np.append(rng.uniform(0.6, 1.0, size=3), 1.0)
        mesh.apply_transform(np.diag(stretch))
    elif shape == "cylinder":
        mesh = trimesh.creation.cylinder(
            radius=rng.uniform(0.2, 0.5), height=rng.uniform(0.5, 1.0),
            sections=32)
    elif shape == "torus":
        mesh = trimesh.creation.torus(
            major_radius=rng.uniform(0.3, 0.4),
            minor_radius=rng.uniform(0.1, 0.2))
    else:
        raise DomainError(
            f"Unknown shape '{shape}', expected one of {PRIMITIVE_SHAPES}")
    return normalize_mesh(mesh)


def normalize_mesh(mesh: trimesh.Trimesh) -> trimesh.Trimesh:
    mesh = mesh.copy()
    mesh.apply_translation(-mesh.bounds.mean(axis=0))
    mesh.apply_scale(1.0 / mesh.extents.max())
    return mesh


def _interior_seeds(mesh: trimesh.Trimesh, count: int,
                    rng: np.random.Generator) -> np.ndarray:
    seeds = np.empty((0, 3))
    low, high = mesh.bounds
    while seeds.shape[0] < count:
        candidates = rng.uniform(low, high, size=(4 * count, 3))
        inside = candidates[mesh.contains(candidates)]
        seeds = np.concatenate([seeds, inside])
    return seeds[:count]


def voronoi_fracture(mesh: trimesh.Trimesh, n_cells: int,
                     rng_seed: int) -> list[trimesh.Trimesh]:
    """Fractures a solid by clipping it with the Voronoi cells of random
    interior seed points.

    Each cell is the intersection of the half-spaces closer to its seed than
    to every other seed, so the mesh is sliced (and capped) once per
    bisecting plane. Cells that end up empty are dropped.

    Parameters
    ----------
    mesh : trimesh.Trimesh
        A watertight mesh.
    n_cells : int
        Number of seed points, 1 <= n_cells <= 20.
    rng_seed : int
        Seed for the seed-point placement.

    Returns
    -------
    list[trimesh.Trimesh]
        The non-empty fragments, in seed order.
    """
    if not mesh.is_watertight:
        raise DomainError("Voronoi fracturing needs a watertight mesh")
    if not 1 <= n_cells <= MAX_FRAGMENTS:
        raise DomainError(
            f"n_cells must be between 1 and {MAX_FRAGMENTS}, got {n_cells}")
    if n_cells == 1:
        return [mesh.copy()]
    rng = np.random.default_rng(rng_seed)
    seeds = _interior_seeds(mesh, n_cells, rng)
    fragments: list[trimesh.Trimesh] = []
    for i, seed in enumerate(seeds):
        cell = mesh
        for j, other in enumerate(seeds):
            if i == j:
                continue
            normal = seed - other
            cell = cell.slice_plane(
                plane_origin=(seed + other) / 2.0,
                plane_normal=normal / np.linalg.norm(normal), cap=True)
            if cell is None or len(cell.faces) == 0:
                break
        if cell is None or len(cell.faces) == 0 or \
                abs(cell.volume) < _MIN_FRAGMENT_VOLUME:
            logger.debug("Dropping empty Voronoi cell %d", i)
            continue
        fragments.append(cell)
    return fragments
