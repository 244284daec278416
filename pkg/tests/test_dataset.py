
import os

import numpy as np
import pytest
import trimesh
from scipy.spatial.transform import Rotation

from fracmerge.anchors import sample_training_anchors, select_anchor
from fracmerge.breaking_bad_assembly_store import BreakingBadAssemblyStore
from fracmerge.contacts import contact_neighbors
from fracmerge.domain_error import DomainError
from fracmerge.file_system_assembly_store import (MANIFEST_FILE,
                                                  FileSystemAssemblyStore)
from fracmerge.fracture import primitive_mesh, voronoi_fracture
from fracmerge.fragment_record import AssemblySample, FragmentRecord
from fracmerge.generator import generate_dataset, split_objects
from fracmerge.load_error import LoadError
from fracmerge.point_cloud import PointCloud
from fracmerge.pose import Pose7, pose_compose, pose_inverse
from fracmerge.preprocessing import (normalize_fragment,
                                     prepare_test_sample,
                                     prepare_training_sample,
                                     rotate_fragment,
                                     sample_fragment_points)
from tests.builders import slab_meshes


def _fragment(fragment_id, scale=1.0):
    points = np.random.default_rng(fragment_id).uniform(-0.5, 0.5, (10, 3))
    return FragmentRecord(fragment_id, points, scale)


def test_assembly_sample_validates_fragments():
    with pytest.raises(DomainError):
        AssemblySample([_fragment(0)], "obj", "f0")
    with pytest.raises(DomainError):
        AssemblySample([_fragment(0), _fragment(2)], "obj", "f0")
    with pytest.raises(DomainError):
        AssemblySample([_fragment(i) for i in range(21)], "obj", "f0")
    with pytest.raises(DomainError):
        FragmentRecord(0, np.zeros((3, 3)), 0.0)
    sample = AssemblySample([_fragment(0), _fragment(1)], "obj", "f0")
    assert sample.name == "obj__f0"
    assert len(sample) == 2


def test_primitive_mesh_is_normalized(rng):
    for shape in ("cube", "sphere", "cylinder", "torus"):
        mesh = primitive_mesh(shape, rng)
        assert mesh.extents.max() == pytest.approx(1.0)
        assert np.allclose(mesh.bounds.mean(axis=0), 0.0, atol=1e-9)
    with pytest.raises(DomainError):
        primitive_mesh("cone", rng)


def test_voronoi_fracture_partitions_the_volume():
    mesh = trimesh.creation.box(extents=(1.0, 1.0, 1.0))
    fragments = voronoi_fracture(mesh, 4, rng_seed=3)
    assert 2 <= len(fragments) <= 4
    total = sum(abs(fragment.volume) for fragment in fragments)
    assert total == pytest.approx(mesh.volume, rel=1e-3)


def test_voronoi_fracture_bounds():
    mesh = trimesh.creation.box(extents=(1.0, 1.0, 1.0))
    assert len(voronoi_fracture(mesh, 1, rng_seed=0)) == 1
    with pytest.raises(DomainError):
        voronoi_fracture(mesh, 21, rng_seed=0)


def test_sample_fragment_points_lie_on_the_surface():
    cube = trimesh.creation.box(extents=(1.0, 1.0, 1.0))
    cloud = sample_fragment_points(cube, seed=3)
    assert len(cloud) == 1000
    assert np.allclose(np.abs(cloud.points).max(axis=1), 0.5)
    assert cloud.has_unit_normals()
    assert np.allclose(np.abs(cloud.normals).max(axis=1), 1.0)
    with pytest.raises(DomainError):
        sample_fragment_points(trimesh.Trimesh())


def test_normalize_fragment_round_trip(rng):
    cloud = PointCloud(rng.uniform(size=(100, 3)) * [2.0, 1.0, 0.5] + 3.0)
    normalized, scale, offset = normalize_fragment(cloud)
    assert np.allclose(normalized.points.mean(axis=0), 0.0)
    assert normalized.longest_extent() == pytest.approx(1.0)
    assert np.allclose(normalized.points * scale + offset, cloud.points)


def test_build_assembly_poses_restore_fragments(three_slabs):
    meshes = slab_meshes(3)
    for fragment, mesh in zip(three_slabs.fragments, meshes):
        assert fragment.points.shape == (1000, 3)
        assert np.allclose(fragment.points.mean(axis=0), 0.0, atol=1e-5)
        posed = fragment.posed_points()
        low, high = mesh.bounds
        assert np.all(posed >= low - 1e-5)
        assert np.all(posed <= high + 1e-5)


def test_rotate_fragment_keeps_the_posed_cloud(three_slabs):
    fragment = three_slabs.fragments[1]
    rotation = Rotation.from_euler("xyz", [30, 60, 90], degrees=True)
    rotated = rotate_fragment(fragment, rotation)
    assert np.allclose(rotated.posed_points(), fragment.posed_points(),
                       atol=1e-5)
    assert rotated.local_cloud().longest_extent() == \
        pytest.approx(rotated.scale, rel=1e-5)


def test_prepare_test_sample_keeps_the_assembly(three_slabs, rng):
    sample = prepare_test_sample(three_slabs, rng)
    for before, after in zip(three_slabs.fragments, sample.fragments):
        assert np.allclose(after.posed_points(), before.posed_points(),
                           atol=1e-5)


@pytest.fixture(scope="module")
def hidden_rotations(three_slabs):
    """[draws, fragments, 3, 3] rotations hidden by prepare_test_sample. The
    slab fragments start unrotated, so each new ground-truth rotation is the
    inverse of the one applied to the local frame."""
    rng = np.random.default_rng(7)
    draws = []
    for _ in range(1000):
        sample = prepare_test_sample(three_slabs, rng)
        draws.append([f.gt_pose.rotation().as_matrix()
                      for f in sample.fragments])
    return np.array(draws)


def test_test_sample_rotations_are_uniform(hidden_rotations):
    n = hidden_rotations.shape[0]
    for fragment in range(hidden_rotations.shape[1]):
        matrices = hidden_rotations[:, fragment]
        for axis in range(3):
            resultant = matrices[:, :, axis].mean(axis=0)
            # Rayleigh statistic, chi-squared with 3 degrees of freedom
            assert 3 * n * resultant @ resultant < 21.11
        traces = np.trace(matrices, axis1=1, axis2=2)
        assert abs(traces.mean()) < 0.15


def test_test_sample_rotations_are_independent(hidden_rotations):
    z_axes = hidden_rotations[:, :, :, 2]
    for f, g in [(0, 1), (0, 2), (1, 2)]:
        cross = z_axes[:, f].T @ z_axes[:, g] / len(z_axes)
        assert np.all(np.abs(cross) < 0.06)


def test_prepare_training_sample_centers_the_anchor(three_slabs, rng):
    sample = prepare_training_sample(three_slabs, rng, anchor_id=0)
    assert np.allclose(sample.fragments[0].posed_points().mean(axis=0), 0.0,
                       atol=1e-6)
    before = pose_compose(pose_inverse(three_slabs.fragments[0].gt_pose),
                          three_slabs.fragments[2].gt_pose)
    after = pose_compose(pose_inverse(sample.fragments[0].gt_pose),
                         sample.fragments[2].gt_pose)
    assert before.allclose(after, atol=1e-9)


def test_select_anchor_prefers_largest_then_lowest_id():
    fragments = [_fragment(0, 1.0), _fragment(1, 2.0), _fragment(2, 2.0)]
    assert select_anchor(fragments) == 1
    with pytest.raises(DomainError):
        select_anchor([])


def test_select_anchor_on_slabs(slabs):
    assert select_anchor(slabs.fragments) == 0


def test_contact_neighbors_of_slabs(slabs):
    neighbors = contact_neighbors(slabs)
    assert neighbors == {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}


def test_sample_training_anchors(slabs, rng):
    neighbors = contact_neighbors(slabs)
    assert sample_training_anchors(slabs, rng, neighbors, 0.0) == {0}
    assert sample_training_anchors(slabs, rng, neighbors, 1.0) == {0, 1}


def test_store_round_trip(tmp_path, three_slabs):
    store = FileSystemAssemblyStore(str(tmp_path))
    store.put_assembly(three_slabs)
    reopened = FileSystemAssemblyStore(str(tmp_path))
    assert reopened.get_names() == [three_slabs.name]
    assert reopened.get_names("train") == []
    loaded = reopened.get_assembly(three_slabs.name)
    assert loaded.split == three_slabs.split
    for expected, actual in zip(three_slabs.fragments, loaded.fragments):
        assert np.array_equal(expected.points, actual.points)
        assert np.array_equal(expected.normals, actual.normals)
        assert actual.scale == expected.scale
        assert actual.gt_pose.allclose(expected.gt_pose, atol=0.0)
    assert reopened.get_assembly("missing") is None


def test_store_reports_truncated_files(tmp_path, three_slabs):
    FileSystemAssemblyStore(str(tmp_path)).put_assembly(three_slabs)
    points_file = os.path.join(str(tmp_path), three_slabs.name,
                               "fragment_01.points.bin")
    with open(points_file, "r+b") as file:
        file.truncate(100)
    with pytest.raises(LoadError) as error:
        FileSystemAssemblyStore(str(tmp_path)).get_assembly(three_slabs.name)
    assert error.value.path == points_file


def test_store_reports_missing_assemblies(tmp_path, three_slabs):
    FileSystemAssemblyStore(str(tmp_path)).put_assembly(three_slabs)
    os.rename(os.path.join(str(tmp_path), three_slabs.name),
              os.path.join(str(tmp_path), "moved"))
    with pytest.raises(LoadError) as error:
        FileSystemAssemblyStore(str(tmp_path))
    assert error.value.path.endswith(MANIFEST_FILE)


def test_split_objects_keeps_both_splits(rng):
    splits = split_objects([f"obj-{i}" for i in range(10)], rng)
    assert sorted(splits.values()).count("test") == 2
    assert sorted(splits.values()).count("train") == 8


def test_generate_dataset_validates_ranges():
    with pytest.raises(DomainError):
        generate_dataset(["cube"], 1, 4, 2, seed=0)
    with pytest.raises(DomainError):
        generate_dataset(["cube"], 4, 21, 2, seed=0)
    with pytest.raises(DomainError):
        generate_dataset([], 2, 4, 2, seed=0)


def test_generate_dataset_writes_assemblies(tmp_path):
    store = FileSystemAssemblyStore(str(tmp_path))
    assemblies = generate_dataset(["cube"], 2, 3, 2, seed=5, store=store)
    assert len(assemblies) == 2
    assert {a.object_id for a in assemblies} == {"cube-0000"}
    for assembly in assemblies:
        assert 2 <= len(assembly) <= 3
    assert FileSystemAssemblyStore(str(tmp_path)).get_names() == \
        sorted(a.name for a in assemblies)


def _write_breaking_bad(root, meshes):
    fracture_dir = os.path.join(root, "everyday", "Bottle", "b01",
                                "fractured_0")
    os.makedirs(fracture_dir)
    for i, mesh in enumerate(meshes):
        mesh.export(os.path.join(fracture_dir, f"piece_{i}.obj"))
    split_file = os.path.join(root, "everyday.test.txt")
    with open(split_file, "w") as file:
        file.write("Bottle/b01\n")
    return split_file


def test_breaking_bad_store(tmp_path):
    split_file = _write_breaking_bad(str(tmp_path), slab_meshes(3))
    store = BreakingBadAssemblyStore(str(tmp_path), "everyday", split_file,
                                     "test")
    assert store.get_names() == ["Bottle-b01__fractured_0"]
    assert store.get_names("train") == []
    assembly = store.get_assembly("Bottle-b01__fractured_0")
    assert len(assembly) == 3
    assert assembly.split == "test"
    posed = np.concatenate([f.posed_points() for f in assembly.fragments])
    assert np.ptp(posed, axis=0).max() == pytest.approx(1.0, abs=0.02)


def test_breaking_bad_store_rejects_unknown_layout(tmp_path):
    split_file = os.path.join(str(tmp_path), "split.txt")
    with open(split_file, "w") as file:
        file.write("Bottle/missing\n")
    with pytest.raises(LoadError):
        BreakingBadAssemblyStore(str(tmp_path), "everyday", split_file,
                                 "test")
    with pytest.raises(LoadError):
        BreakingBadAssemblyStore(str(tmp_path), "everyday",
                                 os.path.join(str(tmp_path), "nope.txt"),
                                 "test")


def test_fragment_pose_default_is_identity():
    assert _fragment(0).gt_pose.is_identity()
    assert _fragment(0).with_pose(Pose7(t=np.ones(3))).gt_pose.allclose(
        Pose7(t=np.ones(3)))
