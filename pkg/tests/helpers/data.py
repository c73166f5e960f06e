"""Small configurations and datasets that keep training tests fast."""
from dataclasses import replace

import numpy as np

from surfvote.config import load_config
from surfvote.scene import Dataset, RigSpec, load_scene, sphere_trace_render

TINY_OVERRIDES = [
    "sdf.n_layers=2",
    "sdf.hidden_width=16",
    "sdf.feature_width=4",
    "sdf.num_frequencies=2",
    "color.n_layers=1",
    "color.hidden_width=8",
    "color.view_frequencies=1",
    "render.n_coarse=8",
    "render.n_importance=4",
    "buffer.resolution=8",
    "loss.pull_queries=64",
    "loss.curvature_samples=16",
    "rays_per_batch=16",
    "iterations=10",
    "optim.warmup_iterations=2",
    "mesh.resolution=16",
    "evaluation.n_points=200",
    "evaluation.eval_resolution=16",
    "log_every=0",
    "progress=false",
]


def tiny_config(*overrides):
    return load_config(None, TINY_OVERRIDES + list(overrides))


def tiny_scene(n_views=4, size=12):
    scene = load_scene("sphere")
    return replace(scene, rig=RigSpec(n_views=n_views, width=size, height=size))


def tiny_dataset(n_views=4, size=12):
    """Dataset rendered in memory from the sphere fixture."""
    return render_dataset(tiny_scene(n_views, size))


def render_dataset(scene):
    cameras = scene.rig.cameras()
    images, masks = [], []
    for camera in cameras:
        image, _, mask = sphere_trace_render(scene, camera)
        images.append(image)
        masks.append(mask)
    return Dataset(cameras, images, masks)


def unit_sphere_network(radius=1.0):
    """Exact sphere SDF as a graph callable, standing in for a field."""
    from surfvote.scene import Sphere, SyntheticScene

    return SyntheticScene([Sphere(radius=radius)]).sdf_network()


def random_points(n, seed=0, scale=0.9):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(n, 3))
