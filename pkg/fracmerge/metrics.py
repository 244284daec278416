
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from fracmerge.chamfer import chamfer_distance
from fracmerge.domain_error import DomainError
from fracmerge.fragment_record import AssemblySample, FragmentRecord
from fracmerge.pose import (Pose7, pose_compose, pose_inverse,
                            rotation_error_deg, translation_error)

PART_ACCURACY_THRESHOLD = 0.01
TRANSLATION_UNIT = 1e-2
CHAMFER_UNIT = 1e-3
RMSE_AGGREGATIONS = ("assembly", "fragment")


def align_by_anchor(pred_poses: Sequence[Pose7], gt_poses: Sequence[Pose7],
                    anchor_id: int) -> list[Pose7]:
    """Applies the one rigid motion to every prediction that puts the
    anchor's predicted pose exactly onto its ground truth."""
    if not 0 <= anchor_id < min(len(pred_poses), len(gt_poses)):
        raise DomainError(
            f"Anchor {anchor_id} is missing from {len(pred_poses)} " +
            f"predicted and {len(gt_poses)} ground-truth poses")
    gauge = pose_compose(gt_poses[anchor_id],
                         pose_inverse(pred_poses[anchor_id]))
    aligned = [pose_compose(gauge, pose) for pose in pred_poses]
    aligned[anchor_id] = gt_poses[anchor_id]
    return aligned


def _selected(count: int, exclude: Optional[int]) -> list[int]:
    return [i for i in range(count) if i != exclude]


def rotation_errors(pred: Sequence[Pose7], gt: Sequence[Pose7],
                    exclude: Optional[int] = None) -> np.ndarray:
    return np.array([rotation_error_deg(pred[i], gt[i])
                     for i in _selected(len(pred), exclude)])


def translation_errors(pred: Sequence[Pose7], gt: Sequence[Pose7],
                       exclude: Optional[int] = None) -> np.ndarray:
    return np.array([translation_error(pred[i], gt[i])
                     for i in _selected(len(pred), exclude)])


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values ** 2))) if values.size else 0.0


def rmse_rotation(pred: Sequence[Pose7], gt: Sequence[Pose7],
                  exclude: Optional[int] = None) -> float:
    """Root mean squared geodesic rotation error in degrees, leaving out the
    fragment `exclude` (usually the anchor)."""
    return _rms(rotation_errors(pred, gt, exclude))


def rmse_translation(pred: Sequence[Pose7], gt: Sequence[Pose7],
                     exclude: Optional[int] = None) -> float:
    return _rms(translation_errors(pred, gt, exclude))


def fragment_chamfer(fragment: FragmentRecord, pred: Pose7) -> float:
    return chamfer_distance(fragment.posed_points(pred),
                            fragment.posed_points())


def part_accuracy(pred: Sequence[Pose7], fragments: Sequence[FragmentRecord],
                  exclude: Optional[int] = None,
                  threshold: float = PART_ACCURACY_THRESHOLD) -> float:
    """Percentage of fragments whose posed cloud lies within Chamfer
    distance `threshold` of the same cloud at its ground-truth pose.

    Parameters
    ----------
    pred : Sequence[Pose7]
        Anchor-aligned predictions, by fragment id.
    fragments : Sequence[FragmentRecord]
        The fragments, carrying their ground-truth poses.
    exclude : Optional[int], optional
        A fragment left out of the count, e.g. the anchor.
    threshold : float, optional
        Chamfer distance below which a fragment counts as placed, 0.01.

    Returns
    -------
    float
        Percentage in [0, 100].
    """
    selected = _selected(len(fragments), exclude)
    if not selected:
        return 100.0
    placed = sum(fragment_chamfer(fragments[i], pred[i]) < threshold
                 for i in selected)
    return 100.0 * placed / len(selected)


def assembly_chamfer(pred: Sequence[Pose7],
                     fragments: Sequence[FragmentRecord]) -> float:
    """Chamfer distance between the union of all predicted posed clouds and
    the union of all ground-truth posed clouds."""
    predicted = np.concatenate([fragment.posed_points(pose)
                                for fragment, pose in zip(fragments, pred)])
    expected = np.concatenate([fragment.posed_points()
                               for fragment in fragments])
    return chamfer_distance(predicted, expected)


@dataclass(frozen=True)
class AssemblyMetrics:
    """Metrics of one assembly in reporting units: degrees, 1e-2 and 1e-3
    normalized units and percent."""

    name: str
    fragment_count: int
    rmse_rot: float
    rmse_trans: float
    part_accuracy: float
    chamfer: float
    rot_squared_sum: float
    trans_squared_sum: float
    error_count: int


def evaluate_assembly(assembly: AssemblySample, pred_poses: Sequence[Pose7],
                      anchor_id: int,
                      include_anchor: bool = False) -> AssemblyMetrics:
    """Aligns the predictions by the anchor and computes every metric of one
    assembly. The anchor is left out of RMSE and part accuracy unless
    `include_anchor` is set."""
    fragments = assembly.fragments
    aligned = align_by_anchor(pred_poses, assembly.gt_poses(), anchor_id)
    exclude = None if include_anchor else anchor_id
    gt = assembly.gt_poses()
    rotation = rotation_errors(aligned, gt, exclude)
    translation = translation_errors(aligned, gt, exclude)
    return AssemblyMetrics(
        assembly.name, len(fragments), _rms(rotation),
        _rms(translation) / TRANSLATION_UNIT,
        part_accuracy(aligned, fragments, exclude),
        assembly_chamfer(aligned, fragments) / CHAMFER_UNIT,
        float(np.sum(rotation ** 2)),
        float(np.sum((translation / TRANSLATION_UNIT) ** 2)),
        int(rotation.size))


@dataclass
class MetricsReport:
    """Per-assembly metric rows and their aggregate.

    RMSE is averaged per assembly first by default; the "fragment"
    aggregation pools the squared errors of all fragments instead.
    """

    rows: list[AssemblyMetrics] = field(default_factory=list)
    rmse_aggregation: str = "assembly"

    def __post_init__(self):
        if self.rmse_aggregation not in RMSE_AGGREGATIONS:
            raise DomainError(
                f"Unknown RMSE aggregation {self.rmse_aggregation!r}, " +
                f"expected one of {', '.join(RMSE_AGGREGATIONS)}")

    def add(self, row: AssemblyMetrics) -> None:
        self.rows.append(row)

    def _mean(self, values: list[float]) -> float:
        return float(np.mean(values)) if values else 0.0

    def _pooled(self, squared: list[float]) -> float:
        count = sum(row.error_count for row in self.rows)
        return float(np.sqrt(sum(squared) / count)) if count else 0.0

    @property
    def rmse_rot(self) -> float:
        if self.rmse_aggregation == "fragment":
            return self._pooled([row.rot_squared_sum for row in self.rows])
        return self._mean([row.rmse_rot for row in self.rows])

    @property
    def rmse_trans(self) -> float:
        if self.rmse_aggregation == "fragment":
            return self._pooled([row.trans_squared_sum for row in self.rows])
        return self._mean([row.rmse_trans for row in self.rows])

    @property
    def part_accuracy(self) -> float:
        return self._mean([row.part_accuracy for row in self.rows])

    @property
    def chamfer(self) -> float:
        return self._mean([row.chamfer for row in self.rows])

    def summary(self) -> dict[str, float]:
        return {"rmse_rot": self.rmse_rot, "rmse_trans": self.rmse_trans,
                "part_accuracy": self.part_accuracy, "chamfer": self.chamfer,
                "assemblies": len(self.rows)}

    def to_dict(self) -> dict:
        return {"summary": self.summary(),
                "rmse_aggregation": self.rmse_aggregation,
                "rows": [asdict(row) for row in self.rows]}
