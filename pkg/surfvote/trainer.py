"""The training loop.

One iteration renders a batch of rays from one view (views are visited
round-robin) and, once the weight buffer holds a snapshot, adds the refinement
losses computed from the same batch:

1. resample the targets ``x_t`` from the snapshot of the previous epoch;
2. render the batch and record its weights and SDF values into the buffer;
3. pull a subset of the batch samples onto the surface and build ``l_geo``;
4. assemble the total loss and take an optimizer step;
5. count the view and refresh the buffer when its period is reached.

Steps 2, 3 and 5 only run when the geometric loss has a positive weight, and
they draw from their own random stream, so a run with ``w_geo = 0`` follows
exactly the same trajectory as plain SDF rendering.
"""
import logging
import os
import time
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from surfvote import io, ops
from surfvote._core.graph import CompGraph, eager_on_arrays
from surfvote._core.op import Constant, as_tensor
from surfvote._core.tensor import Tensor
from surfvote.config import MeshConfig, TrainConfig
from surfvote.exceptions import DegenerateBufferError
from surfvote.fields import ColorField, SdfField, curvature_loss, eikonal_loss
from surfvote.ops.nn import BoundParameters
from surfvote.optim import Adam, learning_rate
from surfvote.refinement import GeometryLosses, TargetPointSet, build_geometry_losses
from surfvote.renderer import (
    LogisticSchedule,
    RenderOutput,
    psnr,
    render_image,
    render_rays,
    rgb_loss,
)
from surfvote.weight_buffer import WeightGridBuffer

logger = logging.getLogger(__name__)

METRIC_FIELDS = [
    "iteration",
    "view",
    "l_rgb",
    "l_eik",
    "l_cd",
    "l_global",
    "l_surf",
    "l_curv",
    "l_geo",
    "total",
    "s",
    "psnr",
    "lr",
    "n_valid",
    "sdf_mean",
    "cd_valid",
]

_GEOMETRY_METRICS = (
    "l_cd",
    "l_global",
    "l_surf",
    "l_geo",
    "n_valid",
    "sdf_mean",
    "cd_valid",
)

RNG_STREAMS = ("init", "render", "geometry", "curvature")

LOG_S = "log_s"


@dataclass
class LossParts:
    """Unweighted loss terms. Inactive terms are 0."""

    l_rgb: object
    l_eik: object = 0.0
    l_geo: object = 0.0
    l_curv: object = 0.0


def _weighted_sum(parts: LossParts, weights: Dict[str, float]):
    for name, weight in weights.items():
        if weight < 0:
            raise ValueError("{} must be >= 0. Got {}.".format(name, weight))
    total = as_tensor(parts.l_rgb)
    for name, weight in weights.items():
        if weight:
            total = total + as_tensor(getattr(parts, "l_" + name[2:])) * weight
    return total


@eager_on_arrays
def total_loss_neus(parts: LossParts, w_eik: float, w_geo: float):
    """``l_rgb + w_eik * l_eik + w_geo * l_geo``. Terms with a zero weight are
    left out of the graph."""
    return _weighted_sum(parts, OrderedDict([("w_eik", w_eik), ("w_geo", w_geo)]))


@eager_on_arrays
def total_loss_with_curvature(
    parts: LossParts, w_eik: float, w_geo: float, w_curv: float
):
    """:func:`total_loss_neus` plus ``w_curv * l_curv``."""
    return _weighted_sum(
        parts,
        OrderedDict([("w_eik", w_eik), ("w_geo", w_geo), ("w_curv", w_curv)]),
    )


@dataclass
class TrainState:
    """Everything that evolves during training.

    Attributes
    ----------
    log_s
        0-d array; the inverse standard deviation is ``s_min + exp(log_s)``.

    view_cursor
        Index of the next view to render (modulo the number of views).

    rngs
        Independent generators, one per entry of ``RNG_STREAMS``.
    """

    config: TrainConfig
    sdf_field: SdfField
    color_field: ColorField
    log_s: np.ndarray
    optimizer: Adam
    buffer: WeightGridBuffer
    rngs: Dict[str, np.random.Generator]
    iteration: int = 0
    view_cursor: int = 0
    metric_log: List[Dict] = field(default_factory=list)

    @property
    def schedule(self) -> LogisticSchedule:
        return LogisticSchedule(self.config.render.s_min)

    @property
    def s(self) -> float:
        return self.schedule.value(float(self.log_s))

    def parameters(self) -> Dict[str, np.ndarray]:
        """Name -> array of every trained array. The arrays are the live ones, so
        in-place updates reach the fields."""
        params = OrderedDict()  # type: Dict[str, np.ndarray]
        params.update(self.sdf_field.parameters())
        params.update(self.color_field.parameters())
        params[LOG_S] = self.log_s
        return params


def spawn_rngs(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return OrderedDict(
        (name, np.random.default_rng(child))
        for name, child in zip(RNG_STREAMS, children)
    )


def init_state(config: TrainConfig) -> TrainState:
    """Fresh fields, optimizer and buffer for a configuration."""
    rngs = spawn_rngs(config.seed)
    sdf_field = SdfField(config.sdf, rng=rngs["init"], dtype=config.dtype)
    color_field = ColorField(
        config.color,
        feature_width=sdf_field.feature_width,
        rng=rngs["init"],
        dtype=config.dtype,
    )
    schedule = LogisticSchedule(config.render.s_min)
    log_s = np.array(schedule.log_s_for(config.render.s_init), dtype=config.dtype)
    optimizer = Adam(config.optim.beta1, config.optim.beta2, config.optim.eps)
    return TrainState(
        config=config,
        sdf_field=sdf_field,
        color_field=color_field,
        log_s=log_s,
        optimizer=optimizer,
        buffer=WeightGridBuffer.from_config(config.buffer),
        rngs=rngs,
    )


@dataclass
class IterationGraph:
    """Loss graph of one batch, with the tensors read after the forward pass."""

    graph: CompGraph
    bound: BoundParameters
    parts: LossParts
    total: Tensor
    s: Tensor
    output: RenderOutput
    geometry: Optional[GeometryLosses] = None
    targets: Optional[TargetPointSet] = None


def _query_subset(n_samples: int, count: int, rng: np.random.Generator):
    if count == 0 or count >= n_samples:
        return np.arange(n_samples)
    return np.sort(rng.choice(n_samples, size=count, replace=False))


def _geometry_losses(
    state: TrainState, output: RenderOutput, sdf_network
) -> Tuple[Optional[GeometryLosses], Optional[TargetPointSet]]:
    loss = state.config.loss
    snapshot = state.buffer.snapshot
    rng = state.rngs["geometry"]
    n_samples = output.batch.positions.shape[0] * output.batch.n_samples
    index = _query_subset(n_samples, loss.pull_queries, rng)
    try:
        targets = TargetPointSet.resample(snapshot, len(index), rng)
    except DegenerateBufferError as e:
        logger.warning("Geometric losses skipped: {}".format(e))
        return None, None
    geometry = build_geometry_losses(
        ops.getitem(output.points, index),
        ops.getitem(output.sdf_flat, index),
        ops.getitem(output.gradients, index),
        snapshot,
        targets,
        loss.w_surf,
        loss.w_global,
        loss.surface_sdf,
        field=sdf_network,
    )
    return geometry, targets


def build_iteration_graph(state: TrainState, rays, target) -> IterationGraph:
    """Render ``rays`` with the current parameters and build the total loss
    against the ``target`` colors (n, 3)."""
    config = state.config
    bound = BoundParameters(state.parameters())
    sdf_network = state.sdf_field.bind(bound)
    color_network = state.color_field.bind(bound)
    s = state.schedule.value(bound[LOG_S])
    output = render_rays(
        sdf_network,
        color_network,
        rays,
        s,
        config.render,
        state.rngs["render"],
        coarse_sdf=state.sdf_field,
        s_value=state.s,
    )

    parts = LossParts(l_rgb=rgb_loss(output.color, target))
    if output.gradients is not None:
        parts.l_eik = eikonal_loss(output.gradients)

    geometry, targets = None, None
    if config.uses_refinement and state.buffer.snapshot is not None:
        if output.batch is not None:
            geometry, targets = _geometry_losses(state, output, sdf_network)
    if geometry is not None:
        parts.l_geo = geometry.l_geo
    w_geo = config.loss.w_geo if geometry is not None else 0.0

    if config.variant == "neus+curvature":
        if config.uses_curvature:
            rng = state.rngs["curvature"]
            if output.batch is not None:
                samples = output.batch.positions.reshape(-1, 3)
                index = rng.choice(len(samples), size=config.loss.curvature_samples)
                points = samples[index]
            else:
                points = rng.uniform(-1.0, 1.0, (config.loss.curvature_samples, 3))
            parts.l_curv = curvature_loss(
                sdf_network, Constant(points), config.loss.curvature_step
            )
        total = total_loss_with_curvature(
            parts, config.loss.w_eik, w_geo, config.loss.w_curv
        )
    else:
        total = total_loss_neus(parts, config.loss.w_eik, w_geo)

    graph = CompGraph(bound.tensors, total)
    return IterationGraph(graph, bound, parts, total, s, output, geometry, targets)


def _scalar(value) -> float:
    return float(np.asarray(value))


def _read_metrics(iteration_graph: IterationGraph, target) -> Dict:
    """Metric row of a graph after its forward pass. Inactive terms are None."""
    parts, geometry = iteration_graph.parts, iteration_graph.geometry
    watched = OrderedDict(
        [("l_rgb", parts.l_rgb), ("l_eik", parts.l_eik), ("l_curv", parts.l_curv)]
    )
    if geometry is not None:
        for name in _GEOMETRY_METRICS:
            watched[name] = getattr(geometry, name)
    color = iteration_graph.output.color
    tensors = [color] + [v for v in watched.values() if isinstance(v, Tensor)]
    computed = dict(zip(tensors, iteration_graph.graph.evaluate(tensors)))

    metrics = OrderedDict((name, None) for name in METRIC_FIELDS)
    for name, value in watched.items():
        if isinstance(value, Tensor):
            metrics[name] = _scalar(computed[value])
    metrics["psnr"] = psnr(np.asarray(computed[color]), target)
    return metrics


def _dump_diagnostics(state: TrainState, rays, metrics: Dict, out_dir) -> str:
    directory = os.path.join(out_dir, "diagnostics")
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "iteration_{:06d}.npz".format(state.iteration))
    arrays = {"param/" + name: value for name, value in state.parameters().items()}
    arrays.update(
        {
            "rays/origins": rays.origins,
            "rays/directions": rays.directions,
            "losses/names": np.array([k for k, v in metrics.items() if v is not None]),
            "losses/values": np.array(
                [v for v in metrics.values() if v is not None], dtype=np.float64
            ),
        }
    )
    np.savez(path, **arrays)
    return path


def _record_batch(state: TrainState, iteration_graph: IterationGraph) -> None:
    batch = iteration_graph.output.batch
    weights, sdf = iteration_graph.graph.evaluate([batch.weights, batch.sdf])
    n_segments = batch.n_samples - 1
    state.buffer.record(
        batch.segment_positions,
        np.asarray(weights),
        np.asarray(sdf)[:, :n_segments],
        np.repeat(batch.ray_index, n_segments),
    )


def _dump_points(state: TrainState, iteration_graph: IterationGraph, out_dir) -> None:
    geometry = iteration_graph.geometry
    pulled, mask = iteration_graph.graph.evaluate(
        [geometry.pulled, geometry.points_set.mask]
    )
    directory = os.path.join(out_dir, "points")
    os.makedirs(directory, exist_ok=True)
    stem = "{:06d}".format(state.iteration)
    io.write_points(
        os.path.join(directory, "xq_{}.ply".format(stem)),
        np.asarray(pulled)[np.asarray(mask) > 0],
    )
    io.write_points(
        os.path.join(directory, "xt_{}.ply".format(stem)),
        iteration_graph.targets.points,
    )


def train_iteration(state: TrainState, dataset, out_dir=None) -> Optional[Dict]:
    """Run one iteration on the next view of ``dataset`` and update ``state``.

    Returns the metric row of the iteration, or None if the loss was not finite,
    in which case nothing is updated or recorded and (given ``out_dir``) a
    diagnostic file is written. The view still counts toward the buffer refresh.
    """
    config = state.config
    n_views = len(dataset)
    view = state.view_cursor % n_views
    rays, target, _ = dataset.sample_batch(
        view, config.rays_per_batch, state.rngs["render"], config.render.bounding_radius
    )
    lr = learning_rate(
        state.iteration,
        config.optim.learning_rate,
        config.iterations,
        config.optim.warmup_iterations,
        config.optim.lr_alpha,
    )

    iteration_graph = build_iteration_graph(state, rays, target)
    graph = iteration_graph.graph
    total = _scalar(graph.forward(iteration_graph.bound.feed()))
    metrics = _read_metrics(iteration_graph, target)
    metrics.update(iteration=state.iteration, view=view, total=total, s=state.s, lr=lr)
    geometry = iteration_graph.geometry
    if geometry is not None and metrics["n_valid"] == 0:
        logger.debug("No pulled point in a valid cell; l_surf and l_global are 0.")

    if not np.isfinite(total):
        message = "Non-finite loss at iteration {}; no update.".format(
            state.iteration
        )
        if out_dir is not None:
            path = _dump_diagnostics(state, rays, metrics, out_dir)
            message += " Diagnostics written to {}.".format(path)
        warnings.warn(message)
        if config.uses_refinement:
            state.buffer.advance_view(n_views)
        state.iteration += 1
        state.view_cursor += 1
        return None

    grads = graph.backward(wrt=iteration_graph.bound.tensors)
    params = state.parameters()
    state.optimizer.step(params, iteration_graph.bound.named(grads), lr)

    if config.uses_refinement:
        if iteration_graph.output.batch is not None:
            _record_batch(state, iteration_graph)
        if (
            geometry is not None
            and out_dir is not None
            and config.dump_points_every
            and state.iteration % config.dump_points_every == 0
        ):
            _dump_points(state, iteration_graph, out_dir)
        state.buffer.advance_view(n_views)

    state.iteration += 1
    state.view_cursor += 1
    state.metric_log.append(metrics)
    return metrics


class Trainer:
    """Drives :func:`train_iteration` and the side outputs of a run.

    Parameters
    ----------
    config
        Training configuration.

    dataset
        Loaded dataset (see :func:`surfvote.scene.load_dataset`).

    out_dir
        Directory of the run outputs (optional): ``metrics.csv``, checkpoints,
        ``eval_log.csv``, point dumps and diagnostics.

    state
        State to resume from (optional).

    reference_points
        Reference surface points for the in-training evaluation. If not given,
        they are sampled from the dataset's scene when one was saved.
    """

    def __init__(
        self,
        config: TrainConfig,
        dataset,
        out_dir=None,
        state: Optional[TrainState] = None,
        reference_points=None,
    ):
        self.config = config
        self.dataset = dataset
        self.out_dir = out_dir
        self.state = state if state is not None else init_state(config)
        self.reference_points = reference_points
        self.elapsed = 0.0
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            self._metrics_csv = io.CsvLog(
                os.path.join(out_dir, "metrics.csv"), METRIC_FIELDS
            )

    @property
    def checkpoint_path(self) -> Optional[str]:
        if self.out_dir is None:
            return None
        return os.path.join(self.out_dir, "checkpoint.npz")

    def run(self, iterations: Optional[int] = None) -> TrainState:
        """Train for ``iterations`` more iterations, or up to ``config.iterations``."""
        from surfvote.checkpoint import save_checkpoint

        config = self.config
        if iterations is None:
            iterations = max(config.iterations - self.state.iteration, 0)
        start = time.perf_counter()
        progress = tqdm(
            total=iterations,
            disable=not config.progress,
            desc="train",
            unit="it",
        )
        with progress:
            for _ in range(iterations):
                metrics = train_iteration(self.state, self.dataset, self.out_dir)
                progress.update(1)
                iteration = self.state.iteration
                if metrics is not None:
                    if self.out_dir is not None:
                        self._metrics_csv.append([metrics])
                    if config.log_every and iteration % config.log_every == 0:
                        logger.info(
                            "iteration {}: total {:.6f}, l_rgb {:.6f}, psnr {:.2f}, "
                            "s {:.2f}".format(
                                iteration,
                                metrics["total"],
                                metrics["l_rgb"],
                                metrics["psnr"],
                                metrics["s"],
                            )
                        )
                    progress.set_postfix(
                        loss="{:.4f}".format(metrics["total"]),
                        psnr="{:.2f}".format(metrics["psnr"]),
                    )
                if (
                    self.out_dir is not None
                    and config.checkpoint_every
                    and iteration % config.checkpoint_every == 0
                ):
                    save_checkpoint(self.state, self.checkpoint_path)
                if (
                    config.evaluation.eval_every
                    and iteration % config.evaluation.eval_every == 0
                ):
                    self.evaluate()
        self.elapsed += time.perf_counter() - start
        if self.out_dir is not None:
            save_checkpoint(self.state, self.checkpoint_path)
        return self.state

    def _reference(self):
        if self.reference_points is None:
            from surfvote.scene import load_dataset_scene, sample_scene_surface

            scene = (
                load_dataset_scene(self.dataset.root) if self.dataset.root else None
            )
            if scene is None:
                return None
            self.reference_points = sample_scene_surface(
                scene, self.config.evaluation.n_points, self.config.evaluation.seed
            )
        return self.reference_points

    def evaluate(self):
        """Extract a low-resolution mesh and append its noise ratio and unmasked
        Chamfer distance to ``eval_log.csv``. Returns the report, or None when
        there is nothing to measure."""
        from surfvote.evaluation import REPORT_FIELDS, SilhouetteSet, evaluate_mesh
        from surfvote.meshing import extract_mesh

        reference = self._reference()
        if reference is None:
            logger.warning("No reference points; in-training evaluation skipped.")
            return None
        mesh_config = MeshConfig(
            resolution=self.config.evaluation.eval_resolution,
            iso=self.config.mesh.iso,
            chunk_size=self.config.mesh.chunk_size,
            n_jobs=self.config.mesh.n_jobs,
            vertex_colors=False,
        )
        mesh = extract_mesh(self.state.sdf_field, mesh_config)
        if mesh.is_empty:
            logger.warning(
                "Empty mesh at iteration {}; evaluation skipped.".format(
                    self.state.iteration
                )
            )
            return None
        report = evaluate_mesh(
            mesh,
            reference,
            SilhouetteSet.from_dataset(self.dataset),
            self.config.evaluation,
            name="iteration {}".format(self.state.iteration),
        )
        logger.info(
            "iteration {}: unmasked CD {:.5f}, noise {:.2f}%".format(
                self.state.iteration, report.unmasked_cd, report.noise_ratio
            )
        )
        if self.out_dir is not None:
            row = report.to_row()
            row["iteration"] = self.state.iteration
            io.CsvLog(
                os.path.join(self.out_dir, "eval_log.csv"),
                ["iteration"] + REPORT_FIELDS,
            ).append([row])
        return report


def view_psnr(state: TrainState, dataset, views=None, chunk_size: int = 1024):
    """PSNR of full renderings of the given views (all by default) against the
    dataset images, over the silhouette pixels when the mask is not empty."""
    views = range(len(dataset)) if views is None else views
    scores = []
    for view in views:
        image = render_image(
            state.sdf_field,
            state.color_field,
            dataset.cameras[view],
            state.s,
            state.config.render,
            chunk_size,
        )
        mask = dataset.masks[view]
        scores.append(psnr(image, dataset.images[view], mask if mask.any() else None))
    return scores
