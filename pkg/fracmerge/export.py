
import json
import logging
import os
from dataclasses import asdict

import numpy as np
import trimesh
from matplotlib import colormaps

from fracmerge.agglomerator import AssemblyResult
from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import AssemblySample
from fracmerge.pose import Pose7

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ("ply",)
PALETTE = "tab20"


def fragment_color(fragment_id: int) -> np.ndarray:
    """RGBA color of a fragment, the same in every export."""
    palette = colormaps[PALETTE]
    rgba = palette(fragment_id % palette.N)
    return np.round(np.asarray(rgba) * 255).astype(np.uint8)


def posed_assembly(sample: AssemblySample,
                   poses: list[Pose7]) -> trimesh.PointCloud:
    """All fragments moved by `poses`, colored per fragment."""
    points = np.concatenate([fragment.posed_points(pose)
                             for fragment, pose in zip(sample.fragments,
                                                       poses)])
    colors = np.concatenate([
        np.tile(fragment_color(fragment.id), (len(fragment.points), 1))
        for fragment in sample.fragments])
    return trimesh.PointCloud(points, colors=colors)


def provenance_document(sample: AssemblySample,
                        result: AssemblyResult) -> dict:
    return {
        "assembly": sample.name,
        "anchor_id": result.anchor_id,
        "merges": [asdict(record) for record in result.provenance],
        "iterations": [
            {"iteration": record.iteration,
             "group_count": record.group_count,
             "component_count": record.component_count,
             "merges": len(record.merges)}
            for record in result.iterations]}


def export_assembly(sample: AssemblySample, result: AssemblyResult,
                    output_dir: str, format: str = "ply") -> list[str]:
    """Writes the posed assembly after every iteration, plus the merge log
    as a JSON sidecar.

    Parameters
    ----------
    sample : AssemblySample
        The assembled test sample.
    result : AssemblyResult
        Its assembly result.
    output_dir : str
        Directory to write into; created if missing.
    format : str, optional
        Point cloud format; only "ply" is supported.

    Returns
    -------
    list[str]
        The paths written, one cloud per iteration and the sidecar last.

    Raises
    ------
    DomainError
        If the format is not supported.
    """
    if format not in EXPORT_FORMATS:
        raise DomainError(
            f"Unknown export format '{format}', expected one of " +
            f"{', '.join(EXPORT_FORMATS)}")
    os.makedirs(output_dir, exist_ok=True)
    paths = []
    for record in result.iterations:
        path = os.path.join(
            output_dir, f"{sample.name}_iter{record.iteration}.{format}")
        posed_assembly(sample, list(record.fragment_poses)).export(
            path, file_type=format)
        paths.append(path)
    sidecar = os.path.join(output_dir, f"{sample.name}_provenance.json")
    with open(sidecar, "w", encoding="utf-8") as file:
        json.dump(provenance_document(sample, result), file, indent=2)
    paths.append(sidecar)
    logger.info("Exported %s to %s", sample.name, output_dir)
    return paths
