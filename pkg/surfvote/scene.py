"""Synthetic ground-truth scenes made of analytic SDF primitives.

A scene is a union of primitives (its SDF is the minimum of theirs), rendered by
sphere tracing into images, depth maps and silhouette masks from a ring of
cameras. Scenes are described by YAML files; the fixtures shipped with the
package live in ``surfvote/scenes/``.
"""
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
import yaml
from omegaconf import OmegaConf

from surfvote import io, ops
from surfvote._core.op import as_tensor
from surfvote._core.tensor import Tensor
from surfvote._core.utils import as_rng, check_points
from surfvote.renderer import Camera, Rays, generate_rays

logger = logging.getLogger(__name__)

SCENES_DIR = os.path.join(os.path.dirname(__file__), "scenes")
ROLES = ("object", "clutter")
LIGHT_PRESETS = ("front", "back")

TRACE_STEPS = 256
TRACE_EPS = 1e-5
# Tracing starts and stops on the sphere enclosing [-1, 1]^3.
TRACE_RADIUS = float(np.sqrt(3.0))
AMBIENT = 0.1
# Keeps norm gradients finite at zero without moving values measurably.
_NORM_EPS = 1e-30


def _vector(value, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.shape != (3,):
        raise ValueError("{} must be a 3-vector. Got {!r}.".format(name, value))
    return array


def _column(x: Tensor, axis: int) -> Tensor:
    return ops.getitem(x, (slice(None), slice(axis, axis + 1)))


@dataclass
class Primitive:
    """Base class of the analytic primitives.

    Subclasses implement ``sdf`` and ``normal`` on arrays, ``sdf_tensor`` on graph
    tensors (returning shape (n, 1)) and surface sampling.
    """

    albedo: List[float] = field(default_factory=lambda: [0.8, 0.8, 0.8])
    role: str = "object"

    kind: ClassVar[str] = ""
    bounded: ClassVar[bool] = True

    def __post_init__(self):
        self.albedo = _vector(self.albedo, "albedo").tolist()
        if self.role not in ROLES:
            raise ValueError(
                "role must be one of {}. Got {!r}.".format(", ".join(ROLES), self.role)
            )

    def sdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sdf_tensor(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def area(self) -> float:
        raise NotImplementedError

    def sample_surface(self, count: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> Dict:
        data = {"type": self.kind}
        for key, value in asdict(self).items():
            data[key] = value if isinstance(value, str) else np.asarray(value).tolist()
        return data


@dataclass
class Sphere(Primitive):
    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    radius: float = 0.5

    kind: ClassVar[str] = "sphere"

    def __post_init__(self):
        super().__post_init__()
        self.center = _vector(self.center, "center").tolist()
        if self.radius <= 0:
            raise ValueError("radius must be > 0.")

    def sdf(self, x):
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def normal(self, x):
        offset = x - self.center
        length = np.linalg.norm(offset, axis=-1, keepdims=True)
        return offset / np.maximum(length, 1e-300)

    def sdf_tensor(self, x):
        offset = as_tensor(x) - np.asarray(self.center)
        return ops.norm(offset, axis=-1, keepdims=True, eps=_NORM_EPS) - self.radius

    def area(self):
        return 4.0 * np.pi * self.radius ** 2

    def sample_surface(self, count, rng):
        directions = rng.normal(size=(count, 3))
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        return np.asarray(self.center) + self.radius * directions


@dataclass
class Box(Primitive):
    """Axis-aligned box given by its center and half extents."""

    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    half_size: List[float] = field(default_factory=lambda: [0.3, 0.3, 0.3])

    kind: ClassVar[str] = "box"

    def __post_init__(self):
        super().__post_init__()
        self.center = _vector(self.center, "center").tolist()
        self.half_size = _vector(self.half_size, "half_size").tolist()
        if min(self.half_size) <= 0:
            raise ValueError("half_size entries must be > 0.")

    def _q(self, x):
        return np.abs(x - self.center) - self.half_size

    def sdf(self, x):
        q = self._q(x)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        return outside + np.minimum(q.max(axis=-1), 0.0)

    def normal(self, x):
        q = self._q(x)
        sign = np.where(x - self.center >= 0, 1.0, -1.0)
        positive = np.maximum(q, 0.0)
        length = np.linalg.norm(positive, axis=-1, keepdims=True)
        outside = sign * positive / np.maximum(length, 1e-300)
        inside = np.zeros_like(q)
        inside[np.arange(len(q)), np.argmax(q, axis=-1)] = 1.0
        return np.where(length > 0, outside, sign * inside)

    def sdf_tensor(self, x):
        q = ops.abs(as_tensor(x) - np.asarray(self.center)) - np.asarray(
            self.half_size
        )
        outside = ops.norm(ops.maximum(q, 0.0), axis=-1, keepdims=True, eps=_NORM_EPS)
        largest = ops.maximum(ops.maximum(_column(q, 0), _column(q, 1)), _column(q, 2))
        return outside + ops.minimum(largest, 0.0)

    def area(self):
        hx, hy, hz = self.half_size
        return 8.0 * (hx * hy + hy * hz + hx * hz)

    def sample_surface(self, count, rng):
        half = np.asarray(self.half_size)
        # face pairs normal to x, y and z
        face_areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
        axis = rng.choice(3, size=count, p=face_areas / face_areas.sum())
        points = rng.uniform(-1.0, 1.0, size=(count, 3)) * half
        side = np.where(rng.uniform(size=count) < 0.5, -1.0, 1.0)
        points[np.arange(count), axis] = side * half[axis]
        return points + np.asarray(self.center)


@dataclass
class Torus(Primitive):
    """Torus around the y axis: ``major`` is the ring radius, ``minor`` the tube
    radius."""

    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    major: float = 0.5
    minor: float = 0.2

    kind: ClassVar[str] = "torus"

    def __post_init__(self):
        super().__post_init__()
        self.center = _vector(self.center, "center").tolist()
        if not 0 < self.minor < self.major:
            raise ValueError("Expected 0 < minor < major.")

    def _parts(self, x):
        p = x - self.center
        rho = np.hypot(p[:, 0], p[:, 2])
        return p, rho, rho - self.major

    def sdf(self, x):
        p, _, radial = self._parts(x)
        return np.hypot(radial, p[:, 1]) - self.minor

    def normal(self, x):
        p, rho, radial = self._parts(x)
        rho = np.maximum(rho, 1e-300)
        grad = np.stack(
            [radial * p[:, 0] / rho, p[:, 1], radial * p[:, 2] / rho], axis=-1
        )
        length = np.linalg.norm(grad, axis=-1, keepdims=True)
        return grad / np.maximum(length, 1e-300)

    def sdf_tensor(self, x):
        p = as_tensor(x) - np.asarray(self.center)
        planar = ops.concatenate([_column(p, 0), _column(p, 2)], axis=-1)
        radial = ops.norm(planar, axis=-1, keepdims=True, eps=_NORM_EPS) - self.major
        tube = ops.concatenate([radial, _column(p, 1)], axis=-1)
        return ops.norm(tube, axis=-1, keepdims=True, eps=_NORM_EPS) - self.minor

    def area(self):
        return 4.0 * np.pi ** 2 * self.major * self.minor

    def sample_surface(self, count, rng):
        # the area element is proportional to major + minor * cos(phi)
        phis = []
        n_found = 0
        while n_found < count:
            phi = rng.uniform(0.0, 2.0 * np.pi, size=2 * count)
            accept = rng.uniform(size=2 * count) * (self.major + self.minor) < (
                self.major + self.minor * np.cos(phi)
            )
            phis.append(phi[accept])
            n_found += int(accept.sum())
        phi = np.concatenate(phis)[:count]
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        rho = self.major + self.minor * np.cos(phi)
        points = np.stack(
            [rho * np.cos(theta), self.minor * np.sin(phi), rho * np.sin(theta)],
            axis=-1,
        )
        return points + np.asarray(self.center)


@dataclass
class Plane(Primitive):
    """Half-space below the plane through ``point`` with unit normal ``normal``.
    Unbounded, so it cannot be surface-sampled."""

    point: List[float] = field(default_factory=lambda: [0.0, -0.9, 0.0])
    normal_vector: List[float] = field(default_factory=lambda: [0.0, 1.0, 0.0])

    kind: ClassVar[str] = "plane"
    bounded: ClassVar[bool] = False

    def __post_init__(self):
        super().__post_init__()
        self.point = _vector(self.point, "point").tolist()
        normal = _vector(self.normal_vector, "normal_vector")
        length = np.linalg.norm(normal)
        if length == 0:
            raise ValueError("normal_vector must be non-zero.")
        self.normal_vector = (normal / length).tolist()

    def sdf(self, x):
        return (x - self.point) @ np.asarray(self.normal_vector)

    def normal(self, x):
        return np.broadcast_to(np.asarray(self.normal_vector), np.shape(x)).copy()

    def sdf_tensor(self, x):
        normal = np.asarray(self.normal_vector).reshape(3, 1)
        return ops.matmul(as_tensor(x) - np.asarray(self.point), normal)

    def area(self):
        return float("inf")

    def sample_surface(self, count, rng):
        raise ValueError("Cannot sample the surface of an unbounded plane.")


PRIMITIVES = {
    cls.kind: cls for cls in (Sphere, Box, Torus, Plane)
}  # type: Dict[str, Type[Primitive]]


def make_primitive(spec: Dict) -> Primitive:
    """Build a primitive from its YAML mapping. ``shard`` is a thin box that
    defaults to the clutter role."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "shard":
        spec.setdefault("role", "clutter")
        spec.setdefault("albedo", [0.2, 0.2, 0.2])
        kind = "box"
    if kind == "plane" and "normal" in spec:
        spec["normal_vector"] = spec.pop("normal")
    if kind not in PRIMITIVES:
        raise ValueError(
            "Unknown primitive type {!r}. Expected one of {}.".format(
                kind, ", ".join(list(PRIMITIVES) + ["shard"])
            )
        )
    return PRIMITIVES[kind](**spec)


@dataclass
class RigSpec:
    """Ring of cameras looking at the origin from ``radius``, at ``elevation``
    degrees above the xz plane (y is up). ``elevation_jitter`` draws a uniform
    offset in degrees per view from ``seed``."""

    n_views: int = 24
    radius: float = 2.5
    elevation: float = 20.0
    elevation_jitter: float = 0.0
    width: int = 64
    height: int = 64
    fov: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.n_views < 3:
            raise ValueError("rig.n_views must be >= 3. Got {}.".format(self.n_views))
        if self.radius <= TRACE_RADIUS:
            raise ValueError("rig.radius must place the cameras outside [-1, 1]^3.")

    def cameras(self) -> List[Camera]:
        rng = np.random.default_rng(self.seed)
        jitter = rng.uniform(-1.0, 1.0, size=self.n_views) * self.elevation_jitter
        cameras = []
        for k in range(self.n_views):
            azimuth = 2.0 * np.pi * k / self.n_views
            elevation = np.radians(self.elevation + jitter[k])
            eye = self.radius * np.array(
                [
                    np.cos(elevation) * np.sin(azimuth),
                    np.sin(elevation),
                    np.cos(elevation) * np.cos(azimuth),
                ]
            )
            cameras.append(
                Camera.look_at(
                    eye, width=self.width, height=self.height, fov=self.fov
                )
            )
        return cameras


@dataclass
class SyntheticScene:
    """Union of analytic primitives with a directional light and a camera rig.

    ``light`` is a direction towards the light in world coordinates, or one of
    the presets ``front`` (a headlight along each viewing ray) and ``back``
    (light from behind the scene, along each camera's optical axis).
    """

    primitives: List[Primitive]
    light: Union[str, List[float]] = field(default_factory=lambda: [0.3, 1.0, 0.6])
    background: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    rig: RigSpec = field(default_factory=RigSpec)
    name: str = "scene"

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("A scene needs at least one primitive.")
        if isinstance(self.light, str):
            if self.light not in LIGHT_PRESETS:
                raise ValueError(
                    "light must be a 3-vector or one of {}.".format(
                        ", ".join(LIGHT_PRESETS)
                    )
                )
        else:
            light = _vector(self.light, "light")
            self.light = (light / np.linalg.norm(light)).tolist()
        self.background = _vector(self.background, "background").tolist()
        for primitive in self.primitives:
            if not primitive.bounded:
                warnings.warn(
                    "Scene {!r} holds an unbounded {} primitive; the scene is not "
                    "contained in [-1, 1]^3.".format(self.name, primitive.kind)
                )

    @property
    def object_ids(self) -> np.ndarray:
        return np.array(
            [i for i, p in enumerate(self.primitives) if p.role == "object"],
            dtype=np.int64,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "SyntheticScene":
        data = dict(data)
        primitives = [make_primitive(spec) for spec in data.pop("primitives", [])]
        rig_data = data.pop("rig", None) or {}
        rig = OmegaConf.to_object(
            OmegaConf.merge(OmegaConf.structured(RigSpec), rig_data)
        )
        return cls(primitives=primitives, rig=rig, **data)

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "light": self.light,
            "background": list(self.background),
            "primitives": [p.to_dict() for p in self.primitives],
            "rig": asdict(self.rig),
        }

    def sdf_network(self):
        """The scene SDF as a graph callable ``x -> (f (n, 1), None)``, usable
        wherever a field is expected."""

        def network(x) -> Tuple[Tensor, None]:
            x = as_tensor(x)
            sdf = None
            for primitive in self.primitives:
                value = primitive.sdf_tensor(x)
                sdf = value if sdf is None else ops.minimum(sdf, value)
            return sdf, None

        return network


def load_scene(name_or_path: str) -> SyntheticScene:
    """Load a scene from a YAML file, or a shipped fixture by name (``sphere``,
    ``composite``, ``cluttered``)."""
    path = name_or_path
    if not os.path.exists(path):
        path = os.path.join(SCENES_DIR, "{}.yaml".format(name_or_path))
        if not os.path.exists(path):
            raise FileNotFoundError(
                "No scene file or fixture named {!r}.".format(name_or_path)
            )
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    data.setdefault(
        "name", os.path.splitext(os.path.basename(str(name_or_path)))[0]
    )
    return SyntheticScene.from_dict(data)


def save_scene(scene: SyntheticScene, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scene.to_dict(), f, sort_keys=False)


def analytic_sdf(
    scene: SyntheticScene, x
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Union SDF of the scene at points (n, 3): the minimum over primitives, the
    analytic normal of the winning primitive and its index."""
    x = check_points("x", np.asarray(x, dtype=np.float64))
    values = np.stack([p.sdf(x) for p in scene.primitives], axis=-1)
    winner = np.argmin(values, axis=-1)
    sdf = values[np.arange(len(x)), winner]
    normals = np.zeros_like(x)
    for i, primitive in enumerate(scene.primitives):
        selected = winner == i
        if selected.any():
            normals[selected] = primitive.normal(x[selected])
    return sdf, normals, winner


def _light_directions(scene: SyntheticScene, camera: Camera, rays: Rays):
    if scene.light == "front":
        return -rays.directions
    if scene.light == "back":
        return np.broadcast_to(camera.axis, rays.directions.shape)
    return np.broadcast_to(np.asarray(scene.light), rays.directions.shape)


def sphere_trace(
    scene: SyntheticScene, rays: Rays
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """March every ray ``t <- t + f`` from its entry into the tracing sphere until
    ``|f| < 1e-5`` or past the exit, for at most 256 steps. Returns the depths,
    the hit flags and the winning primitive of every hit (-1 for misses)."""
    n = len(rays)
    t = rays.near.copy()
    hit = np.zeros(n, dtype=bool)
    active = rays.hit.copy()
    for _ in range(TRACE_STEPS):
        if not active.any():
            break
        index = np.flatnonzero(active)
        points = rays.origins[index] + t[index, None] * rays.directions[index]
        sdf, _, _ = analytic_sdf(scene, points)
        converged = np.abs(sdf) < TRACE_EPS
        hit[index[converged]] = True
        active[index[converged]] = False
        marching = index[~converged]
        t[marching] += sdf[~converged]
        escaped = t[marching] > rays.far[marching]
        active[marching[escaped]] = False
    winner = np.full(n, -1, dtype=np.int64)
    if hit.any():
        points = rays.origins[hit] + t[hit, None] * rays.directions[hit]
        winner[hit] = analytic_sdf(scene, points)[2]
    return t, hit, winner


def sphere_trace_render(
    scene: SyntheticScene, camera: Camera
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render the scene from a camera.

    Returns the (h, w, 3) image, the (h, w) depth along each ray (``inf`` where
    the ray misses) and the (h, w) silhouette mask. Hits are shaded
    ``clip(max(0, n.l) * albedo + 0.1, 0, 1)``; the mask holds the pixels whose
    hit belongs to an ``object`` primitive.
    """
    rays = generate_rays(camera, camera.all_pixels(), TRACE_RADIUS)
    depth, hit, winner = sphere_trace(scene, rays)

    image = np.tile(np.asarray(scene.background), (len(rays), 1))
    if hit.any():
        points = rays.origins[hit] + depth[hit, None] * rays.directions[hit]
        _, normals, _ = analytic_sdf(scene, points)
        light = _light_directions(scene, camera, rays)[hit]
        lambert = np.maximum(np.sum(normals * light, axis=-1), 0.0)
        albedo = np.array([p.albedo for p in scene.primitives])[winner[hit]]
        image[hit] = np.clip(lambert[:, None] * albedo + AMBIENT, 0.0, 1.0)

    is_object = np.isin(winner, scene.object_ids) & hit
    depth = np.where(hit, depth, np.inf)
    shape = (camera.height, camera.width)
    return image.reshape(shape + (3,)), depth.reshape(shape), is_object.reshape(shape)


def sample_scene_surface(scene: SyntheticScene, count: int, rng=None) -> np.ndarray:
    """Points distributed uniformly by area on the surface of the union of the
    object primitives (clutter excluded).

    Raises
    ------
    ValueError
        If an object primitive is unbounded or ``count`` < 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1.")
    rng = as_rng(rng)
    objects = [scene.primitives[i] for i in scene.object_ids]
    if not objects:
        raise ValueError("Scene {!r} has no object primitive.".format(scene.name))
    areas = np.array([p.area() for p in objects])
    if not np.all(np.isfinite(areas)):
        raise ValueError("Cannot sample the surface of an unbounded primitive.")

    chunks, n_found = [], 0
    for _ in range(1000):
        per_primitive = rng.multinomial(2 * count, areas / areas.sum())
        candidates = np.concatenate(
            [p.sample_surface(int(m), rng) for p, m in zip(objects, per_primitive)]
        )
        # keep the points not buried inside another object primitive
        others = np.stack([p.sdf(candidates) for p in objects], axis=-1)
        keep = others.min(axis=-1) >= -1e-9
        chunks.append(candidates[keep])
        n_found += int(keep.sum())
        if n_found >= count:
            break
    points = np.concatenate(chunks)
    if len(points) < count:
        raise ValueError("The object primitives have no exposed surface.")
    return points[rng.permutation(len(points))[:count]]


# Datasets #############################################################################


@dataclass
class DatasetManifest:
    """Relative paths of a generated dataset's files (see ``docs/src/formats.rst``)."""

    images: List[str]
    images_float: List[str]
    masks: List[str]
    cameras: str
    scene: str
    splits: Dict[str, List[int]]
    scale_note: str = "scene units; the object fits in [-1, 1]^3"
    version: int = 1

    def __post_init__(self):
        counts = {len(self.images), len(self.masks)}
        if self.images_float:
            counts.add(len(self.images_float))
        if len(counts) != 1:
            raise ValueError("Image, float image and mask counts differ.")

    def save(self, path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(asdict(self), f, sort_keys=False)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as f:
            return cls(**yaml.safe_load(f))


@dataclass
class Dataset:
    """Loaded images (float, (h, w, 3)), masks (bool, (h, w)) and cameras."""

    cameras: List[Camera]
    images: List[np.ndarray]
    masks: List[np.ndarray]
    root: Optional[str] = None

    def __post_init__(self):
        if not (len(self.cameras) == len(self.images) == len(self.masks)):
            raise ValueError("Cameras, images and masks counts differ.")
        for camera, image, mask in zip(self.cameras, self.images, self.masks):
            if image.shape[:2] != (camera.height, camera.width) or mask.shape != (
                camera.height,
                camera.width,
            ):
                raise ValueError("Image or mask size differs from its camera.")

    def __len__(self):
        return len(self.cameras)

    def sample_batch(
        self, view: int, n_rays: int, rng=None, bounding_radius: float = 1.0
    ) -> Tuple[Rays, np.ndarray, np.ndarray]:
        """Rays through ``n_rays`` random pixels of a view (without replacement
        when the image is large enough), their target colors and the pixels."""
        rng = as_rng(rng)
        camera = self.cameras[view]
        n_pixels = camera.width * camera.height
        flat = rng.choice(n_pixels, size=n_rays, replace=n_rays > n_pixels)
        pixels = np.stack([flat % camera.width, flat // camera.width], axis=-1)
        rays = generate_rays(camera, pixels, bounding_radius)
        target = self.images[view].reshape(-1, 3)[flat]
        return rays, target, pixels


def generate_dataset(
    scene: SyntheticScene,
    out_dir,
    n_views: Optional[int] = None,
    resolution: Optional[Sequence[int]] = None,
) -> DatasetManifest:
    """Render the scene from its rig and write images, masks, cameras, the scene
    spec and a manifest under ``out_dir``.

    ``n_views`` and ``resolution`` (width, height) override the rig's.
    """
    rig = scene.rig
    if n_views is not None or resolution is not None:
        width, height = resolution if resolution is not None else (
            rig.width,
            rig.height,
        )
        rig_data = asdict(rig)
        rig_data.update(
            n_views=n_views if n_views is not None else rig.n_views,
            width=int(width),
            height=int(height),
        )
        rig = RigSpec(**rig_data)
    cameras = rig.cameras()

    for sub in ("images", "masks"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    images, images_float, masks = [], [], []
    for index, camera in enumerate(cameras):
        image, _, mask = sphere_trace_render(scene, camera)
        stem = "{:03d}".format(index)
        images.append(os.path.join("images", stem + ".png"))
        images_float.append(os.path.join("images", stem + ".pfm"))
        masks.append(os.path.join("masks", stem + ".png"))
        io.write_png(os.path.join(out_dir, images[-1]), image)
        io.write_pfm(os.path.join(out_dir, images_float[-1]), image)
        io.write_png(os.path.join(out_dir, masks[-1]), mask)
        logger.debug("Rendered view {} of {}.".format(index + 1, len(cameras)))

    io.write_cameras(os.path.join(out_dir, "cameras.txt"), cameras)
    saved = SyntheticScene(
        scene.primitives, scene.light, scene.background, rig, scene.name
    )
    save_scene(saved, os.path.join(out_dir, "scene.yaml"))
    manifest = DatasetManifest(
        images=images,
        images_float=images_float,
        masks=masks,
        cameras="cameras.txt",
        scene="scene.yaml",
        splits={"train": list(range(len(cameras)))},
    )
    manifest.save(os.path.join(out_dir, "manifest.yaml"))
    logger.info(
        "Wrote {} views of scene {!r} to {}.".format(len(cameras), scene.name, out_dir)
    )
    return manifest


def load_dataset(root) -> Dataset:
    """Load a dataset directory written by :func:`generate_dataset` (or laid out
    the same way). Float images are preferred over PNGs when present."""
    manifest = DatasetManifest.load(os.path.join(root, "manifest.yaml"))
    cameras = io.read_cameras(os.path.join(root, manifest.cameras))
    images = []
    for index, png in enumerate(manifest.images):
        pfm = manifest.images_float[index] if manifest.images_float else None
        if pfm is not None and os.path.exists(os.path.join(root, pfm)):
            images.append(io.read_pfm(os.path.join(root, pfm)).astype(np.float64))
        else:
            images.append(io.read_png(os.path.join(root, png)))
    masks = [io.read_mask(os.path.join(root, m)) for m in manifest.masks]
    if len(cameras) != len(images):
        raise ValueError(
            "{} lists {} images but {} cameras.".format(
                root, len(images), len(cameras)
            )
        )
    return Dataset(cameras, images, masks, root=str(root))


def load_dataset_scene(root) -> Optional[SyntheticScene]:
    """The scene a dataset was generated from, if its spec was saved."""
    manifest = DatasetManifest.load(os.path.join(root, "manifest.yaml"))
    path = os.path.join(root, manifest.scene)
    return load_scene(path) if os.path.exists(path) else None
