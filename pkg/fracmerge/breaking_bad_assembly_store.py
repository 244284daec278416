
import glob
import logging
import os
import zlib
from typing import Optional

import trimesh

from fracmerge.assembly_store import AssemblyStore
from fracmerge.fragment_record import (MAX_FRAGMENTS, MIN_FRAGMENTS,
                                       AssemblySample)
from fracmerge.load_error import LoadError
from fracmerge.preprocessing import build_assembly

logger = logging.getLogger(__name__)

PIECE_PATTERN = "piece_*.obj"
FRACTURE_PATTERNS = ("fractured_*", "mode_*")


class BreakingBadAssemblyStore(AssemblyStore):
    """Loads assemblies from a Breaking Bad style dataset.

    The expected layout is `<data_root>/<subset>/<category>/<object>/
    <fracture>/piece_<i>.obj`, with a split file listing one
    `<category>/<object>` path per line. Every fracture directory of a listed
    object becomes one assembly. Pieces are already in their assembled pose;
    the whole object is normalized to a unit bounding box before sampling.
    Anything that does not match the layout raises `LoadError` so that a
    schema change in a new release is noticed immediately.
    """

    _subset_root: str
    _split: str
    _paths: dict[str, tuple[str, str, str]]
    _cache: dict[str, AssemblySample]

    def __init__(self, data_root: str, subset: str, split_file: str,
                 split: str):
        """Create an AssemblyStore over the objects listed in `split_file`.

        Parameters
        ----------
        data_root : str
            Root directory of the dataset.
        subset : str
            Subset directory name, e.g. "everyday" or "artifact".
        split_file : str
            Text file listing `<category>/<object>` paths, one per line.
        split : str
            Split name recorded on the loaded assemblies.
        """
        self._subset_root = os.path.join(data_root, subset)
        self._split = split
        self._cache = {}
        self._paths = self._index(split_file)

    def _index(self, split_file: str) -> dict[str, tuple[str, str, str]]:
        if not os.path.exists(split_file):
            raise LoadError(split_file, "split file not found")
        with open(split_file, "r") as file:
            objects = [line.strip() for line in file if line.strip()]
        paths: dict[str, tuple[str, str, str]] = {}
        for relative in objects:
            object_dir = os.path.join(self._subset_root, relative)
            if not os.path.isdir(object_dir):
                raise LoadError(object_dir, "listed object not found")
            fractures = sorted(
                path for pattern in FRACTURE_PATTERNS
                for path in glob.glob(os.path.join(object_dir, pattern)))
            if not fractures:
                raise LoadError(object_dir, "no fracture directories")
            object_id = relative.replace("/", "-")
            for fracture_dir in fractures:
                fracture_id = os.path.basename(fracture_dir)
                paths[f"{object_id}__{fracture_id}"] = \
                    (fracture_dir, object_id, fracture_id)
        return paths

    def get_assembly(self, name: str) -> Optional[AssemblySample]:
        if name in self._cache:
            return self._cache[name]
        entry = self._paths.get(name)
        if entry is None:
            return None
        fracture_dir, object_id, fracture_id = entry
        piece_files = sorted(
            glob.glob(os.path.join(fracture_dir, PIECE_PATTERN)),
            key=lambda path: int(
                os.path.basename(path)[len("piece_"):-len(".obj")]))
        if not piece_files:
            raise LoadError(fracture_dir, f"no {PIECE_PATTERN} files")
        if not MIN_FRAGMENTS <= len(piece_files) <= MAX_FRAGMENTS:
            logger.warning("Skipping %s with %d pieces", name,
                           len(piece_files))
            return None
        pieces = []
        for path in piece_files:
            try:
                pieces.append(trimesh.load(path, force="mesh"))
            except Exception as e:
                raise LoadError(path, f"unreadable piece ({e})")
        whole = trimesh.util.concatenate(pieces)
        center = whole.bounds.mean(axis=0)
        factor = 1.0 / whole.extents.max()
        normalized = []
        for piece in pieces:
            piece = piece.copy()
            piece.apply_translation(-center)
            piece.apply_scale(factor)
            normalized.append(piece)
        seed = zlib.crc32(name.encode("utf-8"))
        assembly = build_assembly(normalized, object_id, fracture_id,
                                  self._split, seed=seed)
        self._cache[name] = assembly
        return assembly

    def get_names(self, split: Optional[str] = None) -> list[str]:
        if split is not None and split != self._split:
            return []
        return sorted(self._paths)
