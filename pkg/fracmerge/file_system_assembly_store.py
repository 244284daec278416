
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from fracmerge.assembly_store import AssemblyStore
from fracmerge.fragment_record import AssemblySample, FragmentRecord
from fracmerge.load_error import LoadError
from fracmerge.pose import Pose7

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
POSES_FILE = "poses.bin"
_POINT_DTYPE = np.dtype("<f4")
_POSE_DTYPE = np.dtype("<f8")


@dataclass
class ManifestEntry:
    name: str
    object_id: str
    fracture_id: str
    fragment_count: int
    split: str


@dataclass
class DatasetManifest:
    """Index of the assemblies stored under one root directory."""

    root: str
    entries: list[ManifestEntry] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    @staticmethod
    def load(root: str) -> "DatasetManifest":
        path = os.path.join(root, MANIFEST_FILE)
        if not os.path.exists(path):
            return DatasetManifest(root)
        try:
            with open(path, "r") as file:
                document = json.load(file)
        except (OSError, ValueError) as e:
            raise LoadError(path, f"unreadable manifest ({e})")
        _check_version(path, document)
        entries = [ManifestEntry(**entry) for entry in document["samples"]]
        return DatasetManifest(root, entries, document["format_version"])

    def save(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, MANIFEST_FILE), "w") as file:
            json.dump({"format_version": self.format_version,
                       "samples": [asdict(entry) for entry in self.entries]},
                      file, indent=2)

    def add(self, assembly: AssemblySample) -> None:
        self.entries = [entry for entry in self.entries
                        if entry.name != assembly.name]
        self.entries.append(ManifestEntry(
            assembly.name, assembly.object_id, assembly.fracture_id,
            len(assembly), assembly.split))
        self.entries.sort(key=lambda entry: entry.name)

    def missing(self) -> list[str]:
        """Names of listed assemblies whose directory does not exist."""
        return [entry.name for entry in self.entries
                if not os.path.isdir(os.path.join(self.root, entry.name))]


def _check_version(path: str, document: dict) -> None:
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise LoadError(
            path, f"format version {version}, expected {FORMAT_VERSION}")


def _points_file(fragment_id: int) -> str:
    return f"fragment_{fragment_id:02d}.points.bin"


def _normals_file(fragment_id: int) -> str:
    return f"fragment_{fragment_id:02d}.normals.bin"


def write_assembly(assembly: AssemblySample, path: str) -> None:
    """Writes one assembly to its own directory.

    Points and normals are raw little-endian float32 files per fragment, the
    poses one little-endian float64 (F, 7) file, and the metadata a JSON
    manifest.
    """
    os.makedirs(path, exist_ok=True)
    fragments = []
    for fragment in assembly.fragments:
        fragment.points.astype(_POINT_DTYPE).tofile(
            os.path.join(path, _points_file(fragment.id)))
        if fragment.normals is not None:
            fragment.normals.astype(_POINT_DTYPE).tofile(
                os.path.join(path, _normals_file(fragment.id)))
        fragments.append({"id": fragment.id, "scale": fragment.scale,
                          "num_points": int(fragment.points.shape[0]),
                          "has_normals": fragment.normals is not None})
    poses = np.stack([pose.to_vector() for pose in assembly.gt_poses()])
    poses.astype(_POSE_DTYPE).tofile(os.path.join(path, POSES_FILE))
    with open(os.path.join(path, MANIFEST_FILE), "w") as file:
        json.dump({"format_version": FORMAT_VERSION,
                   "object_id": assembly.object_id,
                   "fracture_id": assembly.fracture_id,
                   "split": assembly.split,
                   "fragments": fragments}, file, indent=2)


def _read_array(path: str, dtype: np.dtype, shape: tuple[int, ...],
                what: str) -> np.ndarray:
    if not os.path.exists(path):
        raise LoadError(path, f"missing file for {what}")
    array = np.fromfile(path, dtype=dtype)
    if array.size != int(np.prod(shape)):
        raise LoadError(
            path, f"{what} has {array.size} values, expected " +
            f"{int(np.prod(shape))}")
    return array.reshape(shape)


def read_assembly(path: str) -> AssemblySample:
    """Reads an assembly written by `write_assembly`.

    Raises
    ------
    LoadError
        On a version mismatch, a missing file or an array of the wrong length;
        the message names the offending file and fragment.
    """
    manifest_path = os.path.join(path, MANIFEST_FILE)
    try:
        with open(manifest_path, "r") as file:
            document = json.load(file)
    except (OSError, ValueError) as e:
        raise LoadError(manifest_path, f"unreadable manifest ({e})")
    _check_version(manifest_path, document)
    entries = document["fragments"]
    poses = _read_array(os.path.join(path, POSES_FILE), _POSE_DTYPE,
                        (len(entries), 7), "poses")
    fragments: list[FragmentRecord] = []
    for entry in entries:
        fragment_id = entry["id"]
        shape = (entry["num_points"], 3)
        points = _read_array(os.path.join(path, _points_file(fragment_id)),
                             _POINT_DTYPE, shape, f"fragment {fragment_id}")
        normals = None
        if entry["has_normals"]:
            normals = _read_array(
                os.path.join(path, _normals_file(fragment_id)), _POINT_DTYPE,
                shape, f"fragment {fragment_id} normals")
        pose = Pose7(poses[fragment_id, :4], poses[fragment_id, 4:])
        fragments.append(FragmentRecord(
            fragment_id, points, entry["scale"], pose, normals))
    return AssemblySample(fragments, document["object_id"],
                          document["fracture_id"], document["split"])


class FileSystemAssemblyStore(AssemblyStore):
    """Loads assemblies from a directory tree written by `write_assembly`, with
    a manifest at the root listing every assembly."""

    _root: str
    _manifest: DatasetManifest
    _cache: dict[str, AssemblySample]

    def __init__(self, root: str):
        """Create an AssemblyStore over the given root directory.

        The root manifest is read (if present) and checked: every listed
        assembly must have a directory.

        Parameters
        ----------
        root : str
            The dataset root directory.
        """
        self._root = root
        self._manifest = DatasetManifest.load(root)
        self._cache = {}
        missing = self._manifest.missing()
        if missing:
            raise LoadError(
                os.path.join(root, MANIFEST_FILE),
                f"missing samples: {', '.join(missing)}")

    @property
    def manifest(self) -> DatasetManifest:
        return self._manifest

    def get_assembly(self, name: str) -> Optional[AssemblySample]:
        assembly = self._cache.get(name)
        if assembly is None:
            if name not in {entry.name for entry in self._manifest.entries}:
                return None
            assembly = read_assembly(os.path.join(self._root, name))
            self._cache[name] = assembly
        return assembly

    def get_names(self, split: Optional[str] = None) -> list[str]:
        return [entry.name for entry in self._manifest.entries
                if split is None or entry.split == split]

    def put_assembly(self, assembly: AssemblySample) -> None:
        """Writes an assembly under the root and records it in the manifest.

        Parameters
        ----------
        assembly : AssemblySample
            The assembly to store; an existing one of the same name is
            replaced.
        """
        write_assembly(assembly, os.path.join(self._root, assembly.name))
        self._manifest.add(assembly)
        self._manifest.save()
        self._cache[assembly.name] = assembly
        logger.debug("Stored assembly %s (%d fragments)", assembly.name,
                     len(assembly))
