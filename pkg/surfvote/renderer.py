"""Cameras, rays and SDF volume rendering.

Rendering follows the NeuS construction. Along each ray, samples ``t_0 < ... <
t_{K-1}`` are placed between the ray's entry and exit of the bounding sphere. The
segment ``[t_i, t_{i+1}]`` gets the opacity

    alpha_i = max((Phi_s(f_i) - Phi_s(f_{i+1})) / Phi_s(f_i), 0)

with ``Phi_s(u) = sigmoid(s * u)``, and the colors of the first K-1 samples are
composited with the weights ``w_i = T_i alpha_i``, ``T_i = prod_{j<i}(1 - alpha_j)``.

Cameras follow the OpenCV convention: the camera looks down its +z axis, x points
right and y down in the image, and pixel ``(i, j)`` (column, row) covers
``[i, i+1) x [j, j+1)`` so its center is at ``(i + 0.5, j + 0.5)``.
"""
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np

from surfvote import ops
from surfvote._core.graph import eager_on_arrays, evaluate, gradients
from surfvote._core.op import Constant, as_tensor
from surfvote._core.tensor import Tensor
from surfvote._core.utils import as_rng
from surfvote.config import RenderConfig
from surfvote.fields import field_dtype

logger = logging.getLogger(__name__)

Scalar = Union[float, Tensor]


@dataclass
class Camera:
    """Pinhole camera.

    Attributes
    ----------
    width, height
        Image size in pixels.

    fx, fy, cx, cy
        Intrinsics in pixels.

    pose
        4x4 world-from-camera matrix (rotation and camera position).
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4):
            raise ValueError(
                "pose must be a 4x4 matrix. Got {}.".format(self.pose.shape)
            )
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("fx and fy must be > 0.")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1.")
        rotation = self.rotation
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-6):
            raise ValueError("The pose rotation is not orthonormal.")

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def axis(self) -> np.ndarray:
        """Optical axis (the camera's +z) in world coordinates."""
        return self.rotation[:, 2]

    @classmethod
    def look_at(
        cls,
        eye,
        target=(0.0, 0.0, 0.0),
        up=(0.0, 1.0, 0.0),
        width: int = 64,
        height: int = 64,
        fov: float = 50.0,
    ) -> "Camera":
        """Camera at ``eye`` looking at ``target``, with a horizontal field of
        view of ``fov`` degrees and the principal point at the image center."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        up = np.asarray(up, dtype=np.float64)
        if np.linalg.norm(np.cross(forward, up)) < 1e-9:
            up = np.array([0.0, 0.0, 1.0] if abs(forward[2]) < 0.9 else [1.0, 0.0, 0.0])
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        pose = np.eye(4)
        pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = right, down, forward, eye
        focal = 0.5 * width / np.tan(0.5 * np.radians(fov))
        return cls(width, height, focal, focal, 0.5 * width, 0.5 * height, pose)

    def project(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Continuous pixel coordinates (n, 2) and camera depths (n,) of world
        points. Points with depth <= 0 are behind the camera."""
        points = np.asarray(points, dtype=np.float64)
        local = (points - self.position) @ self.rotation
        depth = local[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * local[:, 0] / depth + self.cx
            v = self.fy * local[:, 1] / depth + self.cy
        return np.stack([u, v], axis=-1), depth

    def all_pixels(self) -> np.ndarray:
        """Every pixel as (column, row), row-major."""
        rows, cols = np.meshgrid(
            np.arange(self.height), np.arange(self.width), indexing="ij"
        )
        return np.stack([cols.ravel(), rows.ravel()], axis=-1)


@dataclass
class Rays:
    """A batch of rays. ``near``/``far`` are the entry and exit depths of the
    bounding sphere and are meaningful only where ``hit`` is set."""

    origins: np.ndarray
    directions: np.ndarray
    near: np.ndarray
    far: np.ndarray
    hit: np.ndarray

    def __len__(self):
        return len(self.origins)

    def points(self, depths: np.ndarray) -> np.ndarray:
        """Positions ``o + t d`` for depths of shape (n, k), shape (n, k, 3)."""
        return self.origins[:, None] + depths[..., None] * self.directions[:, None]

    def subset(self, index) -> "Rays":
        return Rays(
            self.origins[index],
            self.directions[index],
            self.near[index],
            self.far[index],
            self.hit[index],
        )


@dataclass
class LogisticSchedule:
    """Inverse standard deviation of the logistic density, ``s = s_min +
    exp(log_s)``, so that s never falls below ``s_min``."""

    s_min: float = 1.0

    def log_s_for(self, s: float) -> float:
        if s <= self.s_min:
            raise ValueError("s must be > s_min ({}). Got {}.".format(self.s_min, s))
        return float(np.log(s - self.s_min))

    def value(self, log_s) -> Scalar:
        if isinstance(log_s, Tensor):
            return ops.exp(log_s) + self.s_min
        return self.s_min + float(np.exp(log_s))


def near_far_from_sphere(
    origins: np.ndarray, directions: np.ndarray, radius: float = 1.0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Entry and exit depths of unit-direction rays through the sphere of the
    given radius centered at the origin, and whether the ray meets it ahead."""
    b = np.sum(origins * directions, axis=-1)
    c = np.sum(origins * origins, axis=-1) - radius ** 2
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    far = -b + root
    hit = (disc > 0) & (far > 0)
    near = np.where(hit, np.maximum(-b - root, 0.0), 0.0)
    far = np.where(hit, far, 0.0)
    return near, far, hit


def generate_rays(camera: Camera, pixels, bounding_radius: float = 1.0) -> Rays:
    """Rays through the centers of the given pixels, given as (column, row).

    Raises
    ------
    ValueError
        If a pixel is outside the image.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.shape[1] != 2:
        raise ValueError("pixels must have shape (n, 2). Got {}.".format(pixels.shape))
    cols, rows = pixels[:, 0], pixels[:, 1]
    inside = (cols >= 0) & (cols < camera.width) & (rows >= 0) & (rows < camera.height)
    if not np.all(inside):
        raise ValueError(
            "Pixels must lie within the {}x{} image.".format(
                camera.width, camera.height
            )
        )
    local = np.stack(
        [
            (cols + 0.5 - camera.cx) / camera.fx,
            (rows + 0.5 - camera.cy) / camera.fy,
            np.ones(len(pixels)),
        ],
        axis=-1,
    )
    directions = local @ camera.rotation.T
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, directions.shape).copy()
    near, far, hit = near_far_from_sphere(origins, directions, bounding_radius)
    return Rays(origins, directions, near, far, hit)


def stratified_samples(
    near, far, n_samples: int, jitter: bool = True, rng=None
) -> np.ndarray:
    """``n_samples`` depths per ray in [near, far], one per uniform stratum: the
    stratum midpoint, or a uniform draw inside the stratum with ``jitter``.

    ``near`` and ``far`` are scalars or arrays of shape (n,); the result has shape
    (n, n_samples) (or (n_samples,) for scalars).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2.")
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    shape = near.shape + (n_samples,)
    if jitter:
        offsets = as_rng(rng).uniform(size=shape)
    else:
        offsets = np.full(shape, 0.5)
    fractions = (np.arange(n_samples) + offsets) / n_samples
    return near[..., None] + (far - near)[..., None] * fractions


def importance_upsample(
    depths: np.ndarray,
    weights: np.ndarray,
    n_extra: int,
    rng=None,
    jitter: bool = True,
) -> np.ndarray:
    """Draw ``n_extra`` more depths per ray from the piecewise-constant density
    proportional to the coarse weights, and merge them with the coarse depths.

    ``depths`` has shape (n, k); ``weights`` has shape (n, k - 1), one weight per
    segment between consecutive depths. Rays whose weights are all zero get
    stratified samples over their whole depth range instead.
    """
    depths = np.atleast_2d(np.asarray(depths, dtype=np.float64))
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    n_rays, k = depths.shape
    if weights.shape != (n_rays, k - 1):
        raise ValueError(
            "Expected weights of shape {}. Got {}.".format(
                (n_rays, k - 1), weights.shape
            )
        )
    if n_extra == 0:
        return depths
    rng = as_rng(rng)

    weights = np.maximum(weights, 0.0)
    totals = weights.sum(axis=-1, keepdims=True)
    degenerate = totals[:, 0] <= 0
    pdf = weights / np.where(totals > 0, totals, 1.0)
    cdf = np.concatenate([np.zeros((n_rays, 1)), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[:, -1] = 1.0

    if jitter:
        u = rng.uniform(size=(n_rays, n_extra))
    else:
        u = np.broadcast_to((np.arange(n_extra) + 0.5) / n_extra, (n_rays, n_extra))

    # segment of each draw: number of interior cdf knots at or below it
    segment = np.sum(u[..., None] >= cdf[:, None, 1:-1], axis=-1)
    rows = np.arange(n_rays)[:, None]
    lower_cdf = cdf[rows, segment]
    mass = pdf[rows, segment]
    fraction = np.where(mass > 0, (u - lower_cdf) / np.where(mass > 0, mass, 1.0), 0.5)
    fraction = np.clip(fraction, 0.0, 1.0)
    lower = depths[rows, segment]
    upper = depths[rows, segment + 1]
    extra = lower + fraction * (upper - lower)

    if np.any(degenerate):
        extra[degenerate] = stratified_samples(
            depths[degenerate, 0], depths[degenerate, -1], n_extra, jitter, rng
        )
    return np.sort(np.concatenate([depths, extra], axis=-1), axis=-1)


@eager_on_arrays
def neus_alpha(f_i, f_next, s, eps: float = 1e-7):
    """Opacity of the segment between two consecutive samples with SDF values
    ``f_i`` and ``f_next``, for the inverse standard deviation ``s``."""
    if not isinstance(s, Tensor) and s <= 0:
        raise ValueError("s must be > 0.")
    prev_cdf = ops.sigmoid(as_tensor(f_i) * s)
    next_cdf = ops.sigmoid(as_tensor(f_next) * s)
    alpha = (prev_cdf - next_cdf) / ops.maximum(prev_cdf, eps)
    return ops.maximum(alpha, 0.0)


@eager_on_arrays
def composite(alphas, colors, background=None):
    """Alpha-composite per-sample colors along the last sample axis.

    ``alphas`` has shape (..., k) and ``colors`` (..., k, 3). Returns the weights,
    the transmittance and the pixel colors; with a background color, the residual
    transmittance ``1 - sum(w)`` is filled with it.
    """
    alphas = as_tensor(alphas)
    transmittance = ops.exclusive_cumprod(1.0 - alphas)
    weights = transmittance * alphas
    pixel = ops.reduce_sum(ops.expand_dims(weights, -1) * colors, axis=-2)
    if background is not None:
        residual = 1.0 - ops.reduce_sum(weights, axis=-1, keepdims=True)
        pixel = pixel + residual * np.asarray(background, dtype=np.float64)
    return weights, transmittance, pixel


@eager_on_arrays
def rgb_loss(predicted, target):
    """Squared color error summed over channels, averaged over rays.

    Raises
    ------
    ValueError
        If the batch is empty or the shapes differ.
    """
    if np.shape(target)[0] == 0:
        raise ValueError("rgb_loss needs at least one ray.")
    if not isinstance(predicted, Tensor) and np.shape(predicted) != np.shape(target):
        raise ValueError(
            "Shapes differ: {} and {}.".format(np.shape(predicted), np.shape(target))
        )
    residual = as_tensor(predicted) - target
    return ops.reduce_mean(ops.reduce_sum(ops.square(residual), axis=-1))


def psnr(predicted, target, mask=None) -> float:
    """Peak signal-to-noise ratio in dB of images in [0, 1], over the pixels of
    ``mask`` when given. Identical images give ``inf``.

    Raises
    ------
    ValueError
        If the images differ in shape or the mask is empty.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ValueError(
            "Shapes differ: {} and {}.".format(predicted.shape, target.shape)
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("The mask selects no pixel.")
        predicted, target = predicted[mask], target[mask]
    mse = float(np.mean((predicted - target) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * float(np.log10(mse))


@dataclass
class RaySampleBatch:
    """Quadrature samples of the rays that meet the bounding sphere.

    ``depths``, ``positions`` and ``deltas`` are arrays; the other fields are
    tensors of the rendering graph. ``sdf`` holds all k samples per ray, while
    ``alphas``, ``transmittance``, ``weights`` and ``colors`` hold the first k - 1
    (one per segment).
    """

    ray_index: np.ndarray
    depths: np.ndarray
    positions: np.ndarray
    deltas: np.ndarray
    sdf: Tensor
    alphas: Tensor
    transmittance: Tensor
    weights: Tensor
    colors: Tensor

    @property
    def n_samples(self) -> int:
        return self.depths.shape[1]

    @property
    def segment_positions(self) -> np.ndarray:
        return self.positions[:, :-1]


@dataclass
class RenderOutput:
    """Result of :func:`render_rays`. ``color`` has one row per input ray;
    ``points``, ``sdf_flat`` and ``gradients`` are the flattened samples, their
    SDF values and their SDF gradients (shape (m, 3))."""

    color: Tensor
    batch: Optional[RaySampleBatch]
    points: Optional[Tensor]
    sdf_flat: Optional[Tensor]
    gradients: Optional[Tensor]


def _coarse_depths(
    coarse_sdf: Callable,
    rays: Rays,
    s_value: float,
    config: RenderConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    depths = stratified_samples(
        rays.near, rays.far, config.n_coarse, config.perturb, rng
    )
    if config.n_importance == 0:
        return depths
    points = rays.points(depths).reshape(-1, 3).astype(field_dtype(coarse_sdf))
    sdf, _ = coarse_sdf(Constant(points))
    sdf_values = np.reshape(evaluate(sdf), depths.shape)
    alphas = neus_alpha(
        sdf_values[:, :-1], sdf_values[:, 1:], s_value, config.alpha_eps
    )
    transmittance = np.ones_like(alphas)
    transmittance[:, 1:] = np.cumprod(1.0 - alphas[:, :-1], axis=-1)
    return importance_upsample(
        depths, transmittance * alphas, config.n_importance, rng, config.perturb
    )


def render_rays(
    sdf_network: Callable,
    color_network: Callable,
    rays: Rays,
    s: Scalar,
    config: Optional[RenderConfig] = None,
    rng=None,
    coarse_sdf: Optional[Callable] = None,
    s_value: Optional[float] = None,
) -> RenderOutput:
    """Build the rendering graph of a batch of rays.

    Parameters
    ----------
    sdf_network
        Callable mapping a points tensor (m, 3) to ``(f, feature)``.

    color_network
        Callable ``(x, d, normal, feature) -> rgb``.

    rays
        Rays to render. Rays missing the bounding sphere get the background color.

    s
        Inverse standard deviation of the logistic density (tensor or float).

    config
        Sampling budget, perturbation and background.

    rng
        Seed or generator for the sample jitter.

    coarse_sdf
        Callable used for the coarse pass (no gradients needed), e.g. the unbound
        field when ``sdf_network`` reads bound parameters. Defaults to
        ``sdf_network``.

    s_value
        Numeric value of ``s`` for the coarse pass, required if ``s`` is a tensor.
    """
    config = config if config is not None else RenderConfig()
    rng = as_rng(rng)
    coarse_sdf = coarse_sdf if coarse_sdf is not None else sdf_network
    if s_value is None:
        if isinstance(s, Tensor):
            raise ValueError("s_value is required when s is a tensor.")
        s_value = float(s)
    background = np.asarray(config.background, dtype=np.float64)

    hit_index = np.flatnonzero(rays.hit)
    n_rays = len(rays)
    if len(hit_index) == 0:
        warnings.warn("None of the {} rays meets the scene domain.".format(n_rays))
        return RenderOutput(
            Constant(np.tile(background, (n_rays, 1))), None, None, None, None
        )

    hit_rays = rays.subset(hit_index)
    depths = _coarse_depths(coarse_sdf, hit_rays, s_value, config, rng)
    n_hit, k = depths.shape
    positions = hit_rays.points(depths)
    # samples enter the graph in the precision of the field parameters
    dtype = field_dtype(coarse_sdf)
    directions = np.repeat(hit_rays.directions, k, axis=0).astype(dtype)

    points = Constant(positions.reshape(-1, 3).astype(dtype))
    sdf_flat, feature = sdf_network(points)
    (grad,) = gradients(ops.reduce_sum(sdf_flat), [points])
    normals = grad / ops.norm(grad, axis=-1, keepdims=True, eps=1e-20)
    sample_colors = color_network(points, directions, normals, feature)

    sdf = ops.reshape(sdf_flat, (n_hit, k))
    alphas = neus_alpha(
        ops.getitem(sdf, (slice(None), slice(0, k - 1))),
        ops.getitem(sdf, (slice(None), slice(1, k))),
        s,
        config.alpha_eps,
    )
    colors = ops.getitem(
        ops.reshape(sample_colors, (n_hit, k, 3)), (slice(None), slice(0, k - 1))
    )
    weights, transmittance, pixel = composite(alphas, colors, background)

    if n_hit == n_rays:
        color = pixel
    else:
        missed = np.tile(background, (n_rays, 1))
        missed[hit_index] = 0.0
        color = ops.scatter_like(pixel, np.zeros((n_rays, 3)), hit_index) + missed

    batch = RaySampleBatch(
        ray_index=hit_index,
        depths=depths,
        positions=positions,
        deltas=np.diff(depths, axis=-1),
        sdf=sdf,
        alphas=alphas,
        transmittance=transmittance,
        weights=weights,
        colors=colors,
    )
    return RenderOutput(color, batch, points, sdf_flat, grad)


def render_image(
    sdf_network: Callable,
    color_network: Callable,
    camera: Camera,
    s: float,
    config: Optional[RenderConfig] = None,
    chunk_size: int = 1024,
) -> np.ndarray:
    """Render a full (height, width, 3) image without sample jitter."""
    config = config if config is not None else RenderConfig()
    config = replace(config, perturb=False)
    pixels = camera.all_pixels()
    image = np.empty((len(pixels), 3))
    for start in range(0, len(pixels), chunk_size):
        chunk = pixels[start : start + chunk_size]
        rays = generate_rays(camera, chunk, config.bounding_radius)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            output = render_rays(sdf_network, color_network, rays, s, config)
        image[start : start + chunk_size] = evaluate(output.color)
    return image.reshape(camera.height, camera.width, 3)
