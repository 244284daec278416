
import math

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from fracmerge.assembly_state import AssemblyState
from fracmerge.contract_violation import ContractViolation
from fracmerge.histogram import (HISTOGRAM_EDGES, histogram_features,
                                 match_distance_histogram)
from fracmerge.latent_matcher import LatentMatcher
from fracmerge.matcher import MatchSet, compute_matches
from fracmerge.pair_scorer import VerifierPairScorer
from fracmerge.pair_verifier import (PairNodes, PairVerifier, VerifierConfig,
                                     all_pairs, build_pair_nodes,
                                     make_pair_labels)
from fracmerge.pose import Pose7, pose_compose, random_rotation
from fracmerge.training_error import TrainingError
from fracmerge.verifier_trainer import (VerifierTrainingConfig,
                                        class_balance, evaluate_auc,
                                        generate_verifier_examples,
                                        train_verifier, verifier_example)
from tests.builders import (IdentitySolver, IndexMatcher, tiny_encoder,
                            tiny_verifier_config)


def _turned(pose, degrees):
    turn = Pose7.from_rotation(Rotation.from_euler("z", degrees,
                                                   degrees=True))
    return pose_compose(pose, turn)


def _mixed_example(assembly):
    """Ground-truth poses except for a wrongly turned last fragment."""
    poses = assembly.gt_poses()
    poses[-1] = _turned(poses[-1], 30)
    return verifier_example(assembly, poses, IndexMatcher())


def test_histogram_bins():
    features = histogram_features([0.0005, 0.002, 0.02, 0.2])
    assert np.allclose(features, [0.25, 0.25, 0.0, 0.25, 0.0, 0.25, 4.0])
    assert np.array_equal(histogram_features([]), np.zeros(7))


def _binned_by_hand(distances):
    edges = [0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, np.inf]
    counts = [0] * 6
    for d in distances:
        for k in range(6):
            if edges[k] <= d < edges[k + 1]:
                counts[k] += 1
    if not distances:
        return [0.0] * 7
    return [c / len(distances) for c in counts] + [float(len(distances))]


def test_histogram_edges():
    assert HISTOGRAM_EDGES == (0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, np.inf)


def test_match_distance_histogram_against_hand_binning(rng):
    for _ in range(1000):
        size = 40
        cloud_f = rng.normal(size=(size, 3))
        offsets = rng.normal(size=(size, 3))
        offsets *= 10.0 ** rng.uniform(-4.5, -0.5, (size, 1))
        cloud_g = cloud_f + offsets
        indices = rng.choice(size, rng.integers(0, 30), replace=False)
        matches = MatchSet(indices, indices.copy())
        pose = Pose7.from_rotation(random_rotation(rng),
                                   rng.normal(size=3))
        features = match_distance_histogram(matches, cloud_f, cloud_g, pose,
                                            pose)
        rotation = pose.rotation()
        distances = [
            float(np.linalg.norm(
                (rotation.apply(cloud_f[i]) + pose.t)
                - (rotation.apply(cloud_g[i]) + pose.t)))
            for i in indices]
        assert np.allclose(features, _binned_by_hand(distances))


def test_match_distance_histogram_uses_the_poses(rng):
    cloud = rng.normal(size=(50, 3))
    shifted = cloud + [0.003, 0.0, 0.0]
    matches = compute_matches(IndexMatcher(), cloud, shifted)
    identity = Pose7.identity()
    apart = match_distance_histogram(matches, cloud, shifted, identity,
                                     identity)
    assert np.allclose(apart, [0, 1, 0, 0, 0, 0, 50])
    back = Pose7(t=np.array([-0.003, 0.0, 0.0]))
    together = match_distance_histogram(matches, cloud, shifted, identity,
                                        back)
    assert np.allclose(together, [1, 0, 0, 0, 0, 0, 50])
    assert np.array_equal(
        match_distance_histogram(MatchSet(), cloud, shifted, identity,
                                 identity), np.zeros(7))


def test_all_pairs_order():
    assert all_pairs(4).tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3],
                                     [2, 3]]
    assert all_pairs(1).shape == (0, 2)


def test_pair_labels_of_ground_truth(slabs):
    gt = slabs.gt_poses()
    assert make_pair_labels(gt, gt).all()


def test_pair_labels_ignore_the_global_frame(slabs, rng):
    gt = slabs.gt_poses()
    frame = Pose7.from_rotation(Rotation.random(random_state=rng),
                                rng.normal(size=3))
    moved = [pose_compose(frame, pose) for pose in gt]
    assert make_pair_labels(moved, gt).all()


def test_pair_labels_of_a_misplaced_fragment(three_slabs):
    gt = three_slabs.gt_poses()
    turned = list(gt)
    turned[2] = _turned(gt[2], 20)
    assert make_pair_labels(turned, gt).tolist() == [True, False, False]
    nudged = list(gt)
    nudged[2] = pose_compose(Pose7(t=np.array([0.01, 0.0, 0.0])), gt[2])
    assert make_pair_labels(nudged, gt).all()


def test_verifier_predicts_probabilities(rng):
    model = PairVerifier(tiny_verifier_config())
    pairs = all_pairs(4)
    histograms = np.column_stack([rng.dirichlet(np.ones(6), size=6),
                                  rng.integers(0, 100, size=6)])
    probabilities = model.predict(PairNodes(pairs, histograms))
    assert probabilities.shape == (6,)
    assert np.all((probabilities > 0) & (probabilities < 1))
    assert model.predict(PairNodes(all_pairs(1), np.zeros((0, 7)))).size == 0


def test_verifier_hidden_size_must_fit_the_index_encoding():
    with pytest.raises(ContractViolation):
        PairVerifier(VerifierConfig(hidden_size=30, num_heads=2,
                                    index_encoding_size=16))


def test_verifier_index_encoding():
    model = PairVerifier(tiny_verifier_config())
    encoded = model.index_encoding(torch.tensor([[0, 1], [1, 0]]))
    assert encoded.shape == (2, 32)
    assert torch.allclose(encoded[0, :16], encoded[1, 16:])


def test_verifier_save_and_load(tmp_path):
    path = str(tmp_path / "verifier.ckpt")
    PairVerifier(tiny_verifier_config()).save(path, 5)
    model, step = PairVerifier.load(path)
    assert step == 5
    assert model.config == tiny_verifier_config()


def test_latent_matcher_keeps_mutual_matches():
    matcher = LatentMatcher(tiny_encoder())
    matches = matcher.match(np.array([[0.0], [1.0], [5.0]]),
                            np.array([[0.1], [5.05], [10.0]]))
    assert matches.indices_f.tolist() == [0, 2]
    assert matches.indices_g.tolist() == [0, 1]


def test_latent_matcher_ratio_test():
    matcher = LatentMatcher(tiny_encoder())
    ambiguous = matcher.match(np.array([[0.0]]), np.array([[1.0], [-1.05]]))
    assert len(ambiguous) == 0
    assert len(matcher.match(np.zeros((0, 4)), np.zeros((3, 4)))) == 0


def test_latent_matcher_describes_every_point(three_slabs):
    matcher = LatentMatcher(tiny_encoder())
    descriptors = matcher.describe(three_slabs.fragments[0].local_points())
    assert descriptors.shape == (1000, 64)
    assert np.all(np.isfinite(descriptors))


def test_build_pair_nodes(three_slabs):
    clouds = [f.local_points() for f in three_slabs.fragments]
    nodes = build_pair_nodes(clouds, three_slabs.gt_poses(), IndexMatcher())
    assert len(nodes) == 3
    assert np.all(nodes.histograms[:, -1] == 1000)


@pytest.mark.parametrize("count", range(2, 21))
def test_build_pair_nodes_covers_every_pair(count, rng):
    clouds = [rng.normal(size=(10, 3)) for _ in range(count)]
    poses = [Pose7.identity()] * count
    nodes = build_pair_nodes(clouds, poses, IndexMatcher())
    assert len(nodes) == math.comb(count, 2)
    assert np.array_equal(nodes.pairs, all_pairs(count))
    assert np.all(nodes.histograms[:, -1] == 10)


def test_verifier_pair_scorer(three_slabs):
    scorer = VerifierPairScorer(PairVerifier(tiny_verifier_config()),
                                IndexMatcher())
    groups = AssemblyState.from_assembly(three_slabs).groups
    scores = scorer.score(groups)
    assert scores.shape == (3,)
    assert np.all((scores >= 0) & (scores <= 1))


def test_verifier_example_labels(three_slabs):
    perfect = verifier_example(three_slabs, three_slabs.gt_poses(),
                               IndexMatcher())
    assert perfect.labels.tolist() == [True, True, True]
    assert class_balance([perfect]) == 1.0
    mixed = _mixed_example(three_slabs)
    assert mixed.labels.tolist() == [True, False, False]
    assert class_balance([perfect, mixed]) == pytest.approx(4 / 6)


def test_evaluate_auc(three_slabs):
    model = PairVerifier(tiny_verifier_config())
    perfect = verifier_example(three_slabs, three_slabs.gt_poses(),
                               IndexMatcher())
    assert evaluate_auc(model, [perfect]) is None
    auc = evaluate_auc(model, [_mixed_example(three_slabs)])
    assert 0.0 <= auc <= 1.0


def test_generate_verifier_examples(three_slabs, rng):
    examples = generate_verifier_examples([three_slabs], IdentitySolver(),
                                          IndexMatcher(), rng)
    assert len(examples) == 1
    assert examples[0].labels.shape == (3,)
    assert examples[0].nodes.histograms.shape == (3, 7)


def test_train_verifier(three_slabs, slabs, tmp_path):
    path = str(tmp_path / "verifier.ckpt")
    examples = [_mixed_example(three_slabs), _mixed_example(slabs)]
    result = train_verifier(examples,
                            VerifierTrainingConfig(epochs=3, batch_size=2),
                            tiny_verifier_config(), checkpoint_path=path)
    assert result.steps == 3
    assert len(result.epoch_loss) == 3
    assert result.positive_fraction == pytest.approx(4 / 9)
    assert result.held_out_auc is None
    assert PairVerifier.load(path)[1] == 3


def test_train_verifier_needs_both_classes(three_slabs):
    perfect = verifier_example(three_slabs, three_slabs.gt_poses(),
                               IndexMatcher())
    with pytest.raises(TrainingError):
        train_verifier([perfect])
    with pytest.raises(TrainingError):
        train_verifier([])
