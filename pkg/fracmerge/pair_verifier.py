
import itertools
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch
from torch import nn

from fracmerge.checkpoint import (load_module_state, read_checkpoint,
                                  save_module)
from fracmerge.contract_violation import ContractViolation
from fracmerge.histogram import HISTOGRAM_SIZE, match_distance_histogram
from fracmerge.matcher import PointMatcher
from fracmerge.pose import (Pose7, pose_compose, pose_inverse,
                            rotation_error_deg, translation_error)
from fracmerge.timestep_embedding import sinusoidal_embedding

CHECKPOINT_KIND = "verifier"
ROTATION_THRESHOLD_DEG = 15.0
TRANSLATION_THRESHOLD = 0.02


@dataclass
class VerifierConfig:
    hidden_size: int = 256
    num_heads: int = 8
    num_layers: int = 4
    index_encoding_size: int = 128


class PairNodes(NamedTuple):
    """The C(F, 2) pairs (f, g), f < g, of one assembly with their
    histogram features."""

    pairs: np.ndarray
    histograms: np.ndarray

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


def all_pairs(count: int) -> np.ndarray:
    """All index pairs (f, g) with f < g in lexicographic order, [C(F,2), 2].
    """
    pairs = list(itertools.combinations(range(count), 2))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def build_pair_nodes(clouds: Sequence[np.ndarray], poses: Sequence[Pose7],
                     matcher: PointMatcher) -> PairNodes:
    """Matches every pair of clouds and bins the matched distances under the
    given poses. Descriptors are computed once per cloud."""
    descriptors = [matcher.describe(cloud) for cloud in clouds]
    pairs = all_pairs(len(clouds))
    histograms = np.zeros((len(pairs), HISTOGRAM_SIZE))
    for k, (f, g) in enumerate(pairs):
        matches = matcher.match(descriptors[f], descriptors[g])
        histograms[k] = match_distance_histogram(
            matches, clouds[f], clouds[g], poses[f], poses[g])
    return PairNodes(pairs, histograms)


def relative_pose(pose_f: Pose7, pose_g: Pose7) -> Pose7:
    """The pose of g expressed in the frame of f."""
    return pose_compose(pose_inverse(pose_f), pose_g)


def make_pair_labels(pred_poses: Sequence[Pose7], gt_poses: Sequence[Pose7],
                     rotation_threshold: float = ROTATION_THRESHOLD_DEG,
                     translation_threshold: float = TRANSLATION_THRESHOLD
                     ) -> np.ndarray:
    """Labels each pair (f, g), f < g, as correctly aligned when the
    predicted relative pose is within `rotation_threshold` degrees and
    `translation_threshold` of the ground-truth relative pose.

    Returns
    -------
    np.ndarray
        Booleans in `all_pairs` order.
    """
    labels = []
    for f, g in all_pairs(len(pred_poses)):
        predicted = relative_pose(pred_poses[f], pred_poses[g])
        expected = relative_pose(gt_poses[f], gt_poses[g])
        labels.append(
            rotation_error_deg(predicted, expected) < rotation_threshold and
            translation_error(predicted, expected) < translation_threshold)
    return np.array(labels, dtype=bool)


class PairVerifier(nn.Module):
    """Classifies all pairwise alignments of an assembly jointly.

    Each pair node is embedded as the concatenated sinusoidal encodings of
    its two indices (256 values) plus an MLP of its histogram features
    (match count on a log scale), and a transformer encoder attends over all
    nodes.
    """

    config: VerifierConfig

    def __init__(self, config: Optional[VerifierConfig] = None):
        super().__init__()
        config = config or VerifierConfig()
        self.config = config
        if config.hidden_size != 2 * config.index_encoding_size:
            raise ContractViolation(
                f"Hidden size {config.hidden_size} must be twice the index " +
                f"encoding size {config.index_encoding_size}")
        self.histogram_mlp = nn.Sequential(
            nn.Linear(HISTOGRAM_SIZE, config.hidden_size), nn.ReLU(),
            nn.Linear(config.hidden_size, config.hidden_size))
        layer = nn.TransformerEncoderLayer(
            config.hidden_size, config.num_heads,
            dim_feedforward=4 * config.hidden_size, dropout=0.0,
            batch_first=True)
        self.transformer = nn.TransformerEncoder(
            layer, config.num_layers, enable_nested_tensor=False)
        self.head = nn.Linear(config.hidden_size, 1)

    def index_encoding(self, pairs: torch.Tensor) -> torch.Tensor:
        """[..., 2] fragment indices -> [..., 2 * index_encoding_size]"""
        size = self.config.index_encoding_size
        flat = pairs.reshape(-1)
        encoded = sinusoidal_embedding(flat, size)
        return encoded.reshape(*pairs.shape[:-1], 2 * size)

    def forward(self, pairs: torch.Tensor, histograms: torch.Tensor,
                node_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Pair probabilities.

        Parameters
        ----------
        pairs : torch.Tensor
            [B, N, 2] fragment indices.
        histograms : torch.Tensor
            [B, N, 7] histogram features with the raw match count last.
        node_mask : Optional[torch.Tensor], optional
            [B, N], True for real nodes.

        Returns
        -------
        torch.Tensor
            [B, N] probabilities in (0, 1).
        """
        features = torch.cat([histograms[..., :-1],
                              torch.log1p(histograms[..., -1:])], dim=-1)
        nodes = self.index_encoding(pairs) + self.histogram_mlp(features)
        padding = None if node_mask is None else ~node_mask
        nodes = self.transformer(nodes, src_key_padding_mask=padding)
        return torch.sigmoid(self.head(nodes).squeeze(-1))

    def predict(self, nodes: PairNodes) -> np.ndarray:
        """Probabilities for the nodes of one assembly."""
        if len(nodes) == 0:
            return np.zeros(0)
        device = next(self.parameters()).device
        with torch.no_grad():
            probabilities = self(
                torch.as_tensor(nodes.pairs, device=device).unsqueeze(0),
                torch.as_tensor(nodes.histograms, dtype=torch.float32,
                                device=device).unsqueeze(0))
        return probabilities[0].cpu().numpy().astype(np.float64)

    def save(self, path: str, step: int) -> None:
        save_module(path, CHECKPOINT_KIND, self, asdict(self.config), step)

    @staticmethod
    def load(path: str) -> tuple["PairVerifier", int]:
        checkpoint = read_checkpoint(path, CHECKPOINT_KIND)
        model = PairVerifier(VerifierConfig(**checkpoint.config))
        load_module_state(model, checkpoint, path)
        model.eval()
        return model, checkpoint.step
