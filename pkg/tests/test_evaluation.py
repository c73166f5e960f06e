import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surfvote import io
from surfvote.config import EvaluationConfig
from surfvote.evaluation import (
    REPORT_FIELDS,
    EvalReport,
    SilhouetteSet,
    chamfer_components,
    chamfer_eval,
    dilate_mask,
    evaluate_mesh,
    masked_cd,
    mesh_noise_ratio,
    points_inside_hull,
    sample_mesh_points,
    visual_hull_filter,
)
from surfvote.meshing import TriangleMesh, marching_cubes, sample_sdf_grid
from surfvote.renderer import Camera
from surfvote.scene import (
    RigSpec,
    Sphere,
    SyntheticScene,
    load_scene,
    sample_scene_surface,
    sphere_trace_render,
)

from tests.helpers.data import tiny_dataset, unit_sphere_network
from tests.helpers.fixtures import teardown


def front_silhouette():
    """A 20x20 view from +z whose mask is the 4x4 block around the center."""
    camera = Camera.look_at((0.0, 0.0, 3.0), width=20, height=20, fov=90.0)
    mask = np.zeros((20, 20), dtype=bool)
    mask[8:12, 8:12] = True
    return SilhouetteSet([mask], [camera])


def two_triangles():
    vertices = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.05, 0.0, 0.0],
            [0.0, 0.05, 0.0],
            [0.9, 0.0, 0.0],
            [0.95, 0.0, 0.0],
            [0.9, 0.05, 0.0],
        ]
    )
    return TriangleMesh(vertices, [[0, 1, 2], [3, 4, 5]])


def unit_triangle():
    return TriangleMesh(
        np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]]), [[0, 1, 2]]
    )


class TestChamfer:
    def test_components(self):
        pred = np.zeros((1, 3))
        ref = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert chamfer_components(pred, ref) == (0.0, 0.5)
        assert chamfer_eval(pred, ref) == pytest.approx(0.25)

    @pytest.mark.parametrize("squared,expected", [(False, 2.0), (True, 4.0)])
    def test_squared(self, squared, expected):
        pred, ref = np.zeros((1, 3)), np.array([[2.0, 0.0, 0.0]])
        assert chamfer_eval(pred, ref, squared) == pytest.approx(expected)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(30, 3)), rng.normal(size=(20, 3))
        assert chamfer_eval(a, b) == pytest.approx(chamfer_eval(b, a))


class TestSampleMeshPoints:
    def test_points_on_triangle(self):
        points = sample_mesh_points(unit_triangle(), 500, rng=0)
        assert points.shape == (500, 3)
        assert_array_equal(points[:, 2], 0.0)
        assert np.all(points[:, :2] >= 0) and np.all(points.sum(axis=-1) <= 1 + 1e-12)

    def test_deterministic(self):
        assert_array_equal(
            sample_mesh_points(unit_triangle(), 10, rng=3),
            sample_mesh_points(unit_triangle(), 10, rng=3),
        )

    def test_proportional_to_area(self):
        vertices = np.array(
            [[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [5.0, 0, 0], [8.0, 0, 0], [5, 1, 0]]
        )
        mesh = TriangleMesh(vertices, [[0, 1, 2], [3, 4, 5]])
        points = sample_mesh_points(mesh, 4000, rng=1)
        assert np.mean(points[:, 0] >= 5.0) == pytest.approx(0.75, abs=0.03)

    @pytest.mark.parametrize(
        "mesh,count", [(TriangleMesh.empty(), 10), (unit_triangle(), 0)]
    )
    def test_invalid(self, mesh, count):
        with pytest.raises(ValueError):
            sample_mesh_points(mesh, count)


@pytest.mark.parametrize("pixels,expected", [(0, 1), (1, 9), (2, 25)])
def test_dilate_mask(pixels, expected):
    mask = np.zeros((7, 7), dtype=bool)
    mask[3, 3] = True
    assert dilate_mask(mask, pixels).sum() == expected


class TestSilhouettes:
    def test_counts_must_match(self):
        silhouettes = front_silhouette()
        with pytest.raises(ValueError):
            SilhouetteSet(silhouettes.masks * 2, silhouettes.cameras)

    def test_mask_size_must_match(self):
        camera = front_silhouette().cameras[0]
        with pytest.raises(ValueError):
            SilhouetteSet([np.ones((10, 20), dtype=bool)], [camera])

    def test_points_inside_hull(self):
        points = np.array(
            [
                [0.0, 0.0, 0.0],  # center of the mask
                [0.9, 0.0, 0.0],  # projects outside the mask
                [0.0, 0.0, 4.0],  # behind the camera
                [10.0, 0.0, 0.0],  # outside the image
            ]
        )
        inside = points_inside_hull(points, front_silhouette())
        assert_array_equal(inside, [True, False, True, True])

    def test_from_dataset_and_subset(self):
        dataset = tiny_dataset()
        silhouettes = SilhouetteSet.from_dataset(dataset)
        assert len(silhouettes) == 4
        assert len(silhouettes.subset([0, 2])) == 2


class TestHullFilter:
    def test_removes_faces_outside(self):
        inside, removed = visual_hull_filter(two_triangles(), front_silhouette())
        assert removed == 1
        assert inside.n_faces == 1
        assert_allclose(inside.vertices, two_triangles().vertices[:3])
        assert mesh_noise_ratio(two_triangles(), front_silhouette()) == 50.0

    def test_dilation_keeps_nearby_faces(self):
        _, removed = visual_hull_filter(two_triangles(), front_silhouette(), 3)
        assert removed == 0

    def test_empty_mesh(self):
        mesh, removed = visual_hull_filter(TriangleMesh.empty(), front_silhouette())
        assert mesh.is_empty and removed == 0
        with pytest.raises(ValueError):
            mesh_noise_ratio(TriangleMesh.empty(), front_silhouette())

    def test_no_silhouette(self):
        with pytest.raises(ValueError):
            visual_hull_filter(two_triangles(), SilhouetteSet([], []))

    def test_masked_cd(self):
        ref = two_triangles().vertices[:3]
        value = masked_cd(two_triangles(), front_silhouette(), ref, n_points=100)
        # only the central triangle is sampled
        assert value < 0.05

    def test_masked_cd_with_every_face_removed(self):
        mesh = two_triangles().submesh([False, True])
        with pytest.raises(ValueError):
            masked_cd(mesh, front_silhouette(), mesh.vertices)


class TestEvalReport:
    def test_noise_ratio_range(self):
        with pytest.raises(ValueError):
            EvalReport(unmasked_cd=0.1, noise_ratio=120.0)

    def test_text_and_row(self):
        report = EvalReport(
            unmasked_cd=0.1, noise_ratio=2.5, psnr=[20.0, 30.0], name="run"
        )
        assert report.mean_psnr == 25.0
        assert report.to_row()["mean_psnr"] == 25.0
        text = report.to_text()
        assert "(run)" in text and "n/a" in text and "2.50%" in text

    def test_write_csv(self, tmp_path):
        path = str(tmp_path / "report.csv")
        EvalReport(unmasked_cd=0.125, noise_ratio=0.0).write_csv(path)
        rows = io.read_csv(path)
        assert list(rows[0]) == REPORT_FIELDS
        assert rows[0]["unmasked_cd"] == "0.125"
        assert rows[0]["masked_cd"] == ""


@pytest.fixture(scope="module")
def sphere_mesh():
    mesh = marching_cubes(sample_sdf_grid(unit_sphere_network(0.5), 24))
    return mesh


def test_evaluate_sphere_mesh(sphere_mesh, teardown):
    reference = sample_scene_surface(load_scene("sphere"), 2000, rng=0)
    silhouettes = SilhouetteSet.from_dataset(tiny_dataset(size=32))
    config = EvaluationConfig(n_points=2000)
    report = evaluate_mesh(sphere_mesh, reference, silhouettes, config, psnr=[30.0])
    assert report.unmasked_cd < 0.05
    assert report.unmasked_cd == pytest.approx(
        0.5 * (report.accuracy + report.completeness)
    )
    assert report.noise_ratio < 1.0
    assert report.masked_cd is not None
    assert report.n_faces == sphere_mesh.n_faces
    assert report.parameters == {"n_points": 2000, "squared": False, "hull_dilation": 1}


def test_evaluate_without_silhouettes(sphere_mesh, teardown):
    reference = sample_scene_surface(load_scene("sphere"), 500, rng=0)
    config = EvaluationConfig(n_points=500)
    report = evaluate_mesh(sphere_mesh, reference, config=config)
    assert report.noise_ratio == 0.0 and report.masked_cd is None
    again = evaluate_mesh(sphere_mesh, reference, config=config)
    assert again.unmasked_cd == report.unmasked_cd


def sphere_surface(center, radius, resolution=32):
    network = SyntheticScene([Sphere(center=center, radius=radius)]).sdf_network()
    return marching_cubes(sample_sdf_grid(network, resolution))


@pytest.fixture(scope="module")
def object_and_floater():
    """An object sphere and an equal floater, with the object's silhouettes
    from a ring of 8 views."""
    obj = sphere_surface([0.0, 0.0, 0.0], 0.3)
    floater = sphere_surface([0.55, 0.55, 0.55], 0.3)
    mesh = TriangleMesh(
        np.concatenate([obj.vertices, floater.vertices]),
        np.concatenate([obj.faces, floater.faces + obj.n_vertices]),
    )
    scene = SyntheticScene(
        [Sphere(radius=0.3)], rig=RigSpec(n_views=8, width=48, height=48)
    )
    cameras = scene.rig.cameras()
    masks = [sphere_trace_render(scene, camera)[2] for camera in cameras]
    share = 100.0 * floater.n_faces / mesh.n_faces
    return mesh, SilhouetteSet(masks, cameras), share


def test_more_views_remove_more_faces(object_and_floater, teardown):
    mesh, silhouettes, share = object_and_floater
    removed, ratios = [], []
    for k in range(1, len(silhouettes) + 1):
        views = silhouettes.subset(range(k))
        removed.append(visual_hull_filter(mesh, views, dilation=1)[1])
        ratios.append(mesh_noise_ratio(mesh, views, dilation=1))
    assert removed == sorted(removed)
    assert ratios == sorted(ratios)
    assert ratios[-1] == pytest.approx(share, abs=2.0)
    assert 40.0 < share < 60.0
