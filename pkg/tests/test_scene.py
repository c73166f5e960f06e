import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surfvote._core.graph import evaluate
from surfvote.scene import (
    AMBIENT,
    Box,
    Dataset,
    DatasetManifest,
    Plane,
    RigSpec,
    Sphere,
    SyntheticScene,
    Torus,
    analytic_sdf,
    generate_dataset,
    load_dataset,
    load_dataset_scene,
    load_scene,
    make_primitive,
    sample_scene_surface,
    save_scene,
    sphere_trace_render,
)

from tests.helpers.data import random_points, tiny_scene
from tests.helpers.fixtures import teardown

PRIMITIVES = [
    Sphere(center=[0.1, 0.0, -0.2], radius=0.4),
    Box(center=[0.0, 0.1, 0.0], half_size=[0.3, 0.2, 0.4]),
    Torus(center=[0.0, 0.0, 0.1], major=0.5, minor=0.2),
    Plane(point=[0.0, -0.5, 0.0], normal_vector=[0.0, 2.0, 0.0]),
]


def small_rig_scene(name, size=12, n_views=4):
    scene = load_scene(name)
    scene.rig = RigSpec(n_views=n_views, width=size, height=size)
    return scene


class TestPrimitives:
    @pytest.mark.parametrize(
        "primitive,point,expected",
        [
            (Sphere(), [1.0, 0.0, 0.0], 0.5),
            (Box(), [0.5, 0.0, 0.0], 0.2),
            (Box(), [0.0, 0.0, 0.0], -0.3),
            (Box(), [0.4, 0.4, 0.0], np.sqrt(0.02)),
            (Torus(), [0.5, 0.0, 0.0], -0.2),
            (Torus(), [0.0, 0.0, 0.0], 0.3),
            (Plane(), [0.0, 0.0, 0.0], 0.9),
        ],
    )
    def test_sdf_values(self, primitive, point, expected):
        assert primitive.sdf(np.array([point]))[0] == pytest.approx(expected)

    @pytest.mark.parametrize("primitive", PRIMITIVES)
    def test_tensor_sdf_matches_numpy(self, primitive, teardown):
        points = random_points(30)
        symbolic = np.ravel(evaluate(primitive.sdf_tensor(points)))
        assert_allclose(symbolic, primitive.sdf(points), atol=1e-12)

    @pytest.mark.parametrize("primitive", PRIMITIVES)
    def test_normal_is_the_sdf_gradient(self, primitive):
        # points outside every primitive, away from edges
        points = np.array([[0.95, 0.9, 0.85], [-0.9, 0.8, 0.95]])
        step = 1e-6
        numerical = np.stack(
            [
                (
                    primitive.sdf(points + step * np.eye(3)[axis])
                    - primitive.sdf(points - step * np.eye(3)[axis])
                )
                / (2 * step)
                for axis in range(3)
            ],
            axis=-1,
        )
        assert_allclose(primitive.normal(points), numerical, atol=1e-6)

    @pytest.mark.parametrize("primitive", PRIMITIVES[:3])
    def test_surface_samples(self, primitive):
        points = primitive.sample_surface(200, np.random.default_rng(0))
        assert points.shape == (200, 3)
        assert_allclose(primitive.sdf(points), 0.0, atol=1e-12)

    def test_areas(self):
        assert Sphere(radius=0.5).area() == pytest.approx(np.pi)
        assert Box(half_size=[0.5, 0.5, 0.5]).area() == pytest.approx(6.0)
        assert Torus(major=0.5, minor=0.1).area() == pytest.approx(0.2 * np.pi ** 2)
        assert Plane().area() == float("inf")

    def test_plane_normal_is_normalized(self):
        assert PRIMITIVES[3].normal_vector == [0.0, 1.0, 0.0]

    @pytest.mark.parametrize(
        "make",
        [
            lambda: Sphere(radius=0.0),
            lambda: Box(half_size=[0.1, 0.0, 0.1]),
            lambda: Torus(major=0.2, minor=0.3),
            lambda: Plane(normal_vector=[0.0, 0.0, 0.0]),
            lambda: Sphere(role="decor"),
            lambda: Sphere(center=[0.0, 0.0]),
        ],
    )
    def test_invalid(self, make):
        with pytest.raises(ValueError):
            make()


class TestMakePrimitive:
    def test_shard_is_clutter(self):
        shard = make_primitive(
            {"type": "shard", "center": [0.7, -0.7, 0.7], "half_size": [0.1, 0.02, 0.1]}
        )
        assert isinstance(shard, Box)
        assert shard.role == "clutter"

    def test_plane_normal_key(self):
        plane = make_primitive({"type": "plane", "normal": [1.0, 0.0, 0.0]})
        assert plane.normal_vector == [1.0, 0.0, 0.0]

    def test_unknown_type(self):
        with pytest.raises(ValueError, match="Unknown primitive"):
            make_primitive({"type": "cone"})

    def test_to_dict_roundtrip(self):
        for primitive in PRIMITIVES:
            assert make_primitive(primitive.to_dict()) == primitive


class TestScene:
    def test_analytic_sdf(self):
        scene = SyntheticScene([Sphere(radius=0.5)])
        sdf, normals, winner = analytic_sdf(scene, np.array([[1.0, 0.0, 0.0]]))
        assert sdf[0] == pytest.approx(0.5)
        assert_allclose(normals, [[1.0, 0.0, 0.0]])
        assert winner[0] == 0

    def test_union(self):
        scene = SyntheticScene(
            [Sphere(center=[-0.5, 0, 0], radius=0.2), Sphere(center=[0.5, 0, 0])]
        )
        sdf, _, winner = analytic_sdf(scene, np.array([[0.4, 0.0, 0.0], [-0.5, 0, 0]]))
        assert_allclose(sdf, [-0.4, -0.2])
        assert_array_equal(winner, [1, 0])

    def test_sdf_network(self, teardown):
        scene = load_scene("composite")
        points = random_points(40)
        network_sdf, feature = scene.sdf_network()(points)
        assert feature is None
        assert_allclose(
            np.ravel(evaluate(network_sdf)), analytic_sdf(scene, points)[0], atol=1e-12
        )

    def test_light(self):
        scene = SyntheticScene([Sphere()], light=[0.0, 2.0, 0.0])
        assert scene.light == [0.0, 1.0, 0.0]
        assert SyntheticScene([Sphere()], light="back").light == "back"
        with pytest.raises(ValueError):
            SyntheticScene([Sphere()], light="side")

    def test_no_primitive(self):
        with pytest.raises(ValueError):
            SyntheticScene([])

    def test_unbounded_primitive_warns(self):
        with pytest.warns(UserWarning, match="unbounded"):
            SyntheticScene([Sphere(), Plane()])

    def test_object_ids(self):
        assert_array_equal(load_scene("cluttered").object_ids, [0])

    @pytest.mark.parametrize("name", ["sphere", "composite", "cluttered"])
    def test_fixtures(self, name):
        scene = load_scene(name)
        assert scene.name == name
        assert scene.rig.n_views == 24

    def test_missing_scene(self):
        with pytest.raises(FileNotFoundError):
            load_scene("no-such-scene")

    def test_save_and_load(self, tmp_path):
        scene = load_scene("composite")
        path = str(tmp_path / "scene.yaml")
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.primitives == scene.primitives
        assert loaded.rig == scene.rig and loaded.name == scene.name
        assert_allclose(loaded.light, scene.light)


class TestRig:
    def test_cameras(self):
        cameras = RigSpec(n_views=6, width=16, height=10).cameras()
        assert len(cameras) == 6
        for camera in cameras:
            assert np.linalg.norm(camera.position) == pytest.approx(2.5)
            uv, depth = camera.project(np.zeros((1, 3)))
            assert_allclose(uv, [[8.0, 5.0]], atol=1e-9)
            assert depth[0] == pytest.approx(2.5)

    def test_elevation(self):
        camera = RigSpec(n_views=3, elevation=30.0).cameras()[0]
        assert camera.position[1] == pytest.approx(2.5 * np.sin(np.radians(30.0)))

    def test_jitter_is_seeded(self):
        rig = RigSpec(n_views=5, elevation_jitter=10.0, seed=3)
        first = [c.position for c in rig.cameras()]
        second = [c.position for c in rig.cameras()]
        assert_array_equal(first, second)

    @pytest.mark.parametrize("kwargs", [{"n_views": 2}, {"radius": 1.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RigSpec(**kwargs)


class TestSphereTraceRender:
    def test_sphere(self):
        scene = small_rig_scene("sphere")
        camera = scene.rig.cameras()[0]
        image, depth, mask = sphere_trace_render(scene, camera)
        assert image.shape == (12, 12, 3)
        assert_array_equal(mask, np.isfinite(depth))
        assert depth[6, 6] == pytest.approx(2.0, abs=0.05)
        assert not mask[0, 0]
        assert_array_equal(image[0, 0], scene.background)
        assert np.all(image[mask] >= AMBIENT) and np.all(image[mask] <= 1.0)

    def test_clutter_is_not_in_the_mask(self):
        scene = small_rig_scene("cluttered", size=48)
        clutter_hits = 0
        for camera in scene.rig.cameras():
            _, depth, mask = sphere_trace_render(scene, camera)
            clutter_hits += int(np.sum(np.isfinite(depth) & ~mask))
        assert clutter_hits > 0

    def test_light_presets(self):
        scene = small_rig_scene("sphere")
        camera = scene.rig.cameras()[0]
        scene.light = "front"
        front, _, mask = sphere_trace_render(scene, camera)
        scene.light = "back"
        back, _, _ = sphere_trace_render(scene, camera)
        assert np.mean(front[mask]) > np.mean(back[mask])
        # the center of the disc faces away from a light behind the scene
        assert_allclose(back[6, 6], AMBIENT)


class TestSampleSceneSurface:
    def test_sphere(self):
        points = sample_scene_surface(load_scene("sphere"), 300, rng=0)
        assert points.shape == (300, 3)
        assert_allclose(np.linalg.norm(points, axis=-1), 0.5)

    def test_clutter_is_excluded(self):
        points = sample_scene_surface(load_scene("cluttered"), 300, rng=0)
        assert_allclose(np.linalg.norm(points, axis=-1), 0.45)

    def test_union_surface(self):
        scene = load_scene("composite")
        points = sample_scene_surface(scene, 500, rng=1)
        assert np.max(np.abs(analytic_sdf(scene, points)[0])) < 1e-9

    def test_deterministic(self):
        scene = load_scene("composite")
        first = sample_scene_surface(scene, 50, rng=2)
        assert_array_equal(first, sample_scene_surface(scene, 50, rng=2))

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_scene_surface(load_scene("sphere"), 0)
        with pytest.warns(UserWarning):
            plane_only = SyntheticScene([Plane()])
        with pytest.raises(ValueError):
            sample_scene_surface(plane_only, 10)


@pytest.fixture
def generated(tmp_path):
    root = str(tmp_path / "dataset")
    manifest = generate_dataset(tiny_scene(), root, n_views=3, resolution=(8, 6))
    return root, manifest


class TestDataset:
    def test_files(self, generated):
        root, manifest = generated
        assert sorted(os.listdir(root)) == [
            "cameras.txt",
            "images",
            "manifest.yaml",
            "masks",
            "scene.yaml",
        ]
        assert len(os.listdir(os.path.join(root, "images"))) == 6
        assert len(os.listdir(os.path.join(root, "masks"))) == 3
        assert manifest.splits == {"train": [0, 1, 2]}
        assert DatasetManifest.load(os.path.join(root, "manifest.yaml")) == manifest

    def test_load(self, generated):
        root, _ = generated
        dataset = load_dataset(root)
        assert len(dataset) == 3 and dataset.root == root
        rig = RigSpec(n_views=3, width=8, height=6)
        expected, _, mask = sphere_trace_render(tiny_scene(), rig.cameras()[1])
        assert dataset.images[1].shape == (6, 8, 3)
        assert_allclose(dataset.images[1], expected, atol=1e-6)
        assert_array_equal(dataset.masks[1], mask)
        assert_allclose(dataset.cameras[1].pose, rig.cameras()[1].pose)

    def test_png_fallback(self, generated):
        root, _ = generated
        os.remove(os.path.join(root, "images", "000.pfm"))
        image = load_dataset(root).images[0]
        rig = RigSpec(n_views=3, width=8, height=6)
        expected, _, _ = sphere_trace_render(tiny_scene(), rig.cameras()[0])
        assert_allclose(image, expected, atol=0.5 / 255 + 1e-9)

    def test_scene_is_saved(self, generated):
        root, _ = generated
        scene = load_dataset_scene(root)
        assert scene.name == "sphere"
        assert (scene.rig.n_views, scene.rig.width, scene.rig.height) == (3, 8, 6)

    def test_deterministic(self, generated, tmp_path):
        root, _ = generated
        again = str(tmp_path / "again")
        generate_dataset(tiny_scene(), again, n_views=3, resolution=(8, 6))
        for name in ("images/002.pfm", "masks/002.png", "cameras.txt"):
            with open(os.path.join(root, name), "rb") as f:
                first = f.read()
            with open(os.path.join(again, name), "rb") as f:
                assert f.read() == first

    def test_sample_batch(self, generated):
        root, _ = generated
        dataset = load_dataset(root)
        rays, target, pixels = dataset.sample_batch(2, 20, rng=0)
        assert len(rays) == 20 and target.shape == (20, 3)
        assert len({tuple(p) for p in pixels}) == 20
        assert_allclose(target, dataset.images[2][pixels[:, 1], pixels[:, 0]])

    def test_mismatched_counts(self, generated):
        root, _ = generated
        dataset = load_dataset(root)
        with pytest.raises(ValueError):
            Dataset(dataset.cameras, dataset.images[:2], dataset.masks)
        with pytest.raises(ValueError):
            DatasetManifest(["a"], [], ["a", "b"], "cameras.txt", "scene.yaml", {})
