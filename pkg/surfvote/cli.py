"""Command-line interface.

::

    surfvote generate-scene sphere data/sphere
    surfvote train data/sphere runs/sphere --set loss.w_geo=0.1
    surfvote extract-mesh runs/sphere/checkpoint.npz runs/sphere/mesh.ply
    surfvote evaluate runs/sphere/mesh.ply --dataset data/sphere
    surfvote ablate sphere runs/ablation --iterations 500

Every command exits with status 0 on success and 1 on failure, after removing
the outputs it had started to write.
"""
import argparse
import contextlib
import logging
import os
import shutil
import sys
import time
from dataclasses import replace
from typing import Iterator, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import ParameterGrid

from surfvote import io
from surfvote._version import __version__
from surfvote.checkpoint import load_checkpoint
from surfvote.config import config_to_yaml, load_config
from surfvote.evaluation import REPORT_FIELDS, SilhouetteSet, evaluate_mesh
from surfvote.meshing import MESH_FORMATS, export_mesh, extract_mesh, load_mesh
from surfvote.scene import (
    generate_dataset,
    load_dataset,
    load_dataset_scene,
    load_scene,
    sample_scene_surface,
)
from surfvote.trainer import Trainer, view_psnr

logger = logging.getLogger(__name__)

ABLATION_FIELDS = [
    "run",
    "buffer.resolution",
    "loss.w_geo",
    "buffer.refresh_period",
    "train_seconds",
    "final_l_rgb",
] + REPORT_FIELDS


@contextlib.contextmanager
def removed_on_failure(*paths) -> Iterator[None]:
    """Delete those of ``paths`` that did not exist beforehand if the block
    raises."""
    created = [p for p in paths if p is not None and not os.path.exists(p)]
    try:
        yield
    except BaseException:
        for path in created:
            if os.path.isdir(path):
                shutil.rmtree(path, ignore_errors=True)
            elif os.path.exists(path):
                os.remove(path)
        raise


def _load_config(args, progress: bool = True):
    config = load_config(args.config, args.overrides)
    if not progress or args.no_progress:
        config = replace(config, progress=False)
    return config


# Commands ############################################################################


def generate_scene(args) -> None:
    scene = load_scene(args.scene)
    with removed_on_failure(args.out_dir):
        generate_dataset(scene, args.out_dir, args.views, args.resolution)
    print("Wrote dataset of scene {!r} to {}".format(scene.name, args.out_dir))


def train(args) -> None:
    config = _load_config(args)
    dataset = load_dataset(args.dataset)
    checkpoint = os.path.join(args.out_dir, "checkpoint.npz")
    if args.resume:
        if not os.path.exists(checkpoint):
            raise FileNotFoundError(
                "No checkpoint to resume from at {}.".format(checkpoint)
            )
        state = load_checkpoint(checkpoint)
        state.config = replace(state.config, progress=config.progress)
        config = state.config
        logger.info("Resuming at iteration {}.".format(state.iteration))
        trainer = Trainer(config, dataset, args.out_dir, state=state)
        trainer.run()
    else:
        with removed_on_failure(args.out_dir):
            os.makedirs(args.out_dir, exist_ok=True)
            with open(os.path.join(args.out_dir, "config.yaml"), "w") as f:
                f.write(config_to_yaml(config))
            trainer = Trainer(config, dataset, args.out_dir)
            trainer.run()
    last = trainer.state.metric_log[-1] if trainer.state.metric_log else {}
    print(
        "Trained {} iterations in {:.1f}s; last l_rgb {}; checkpoint {}".format(
            trainer.state.iteration, trainer.elapsed, last.get("l_rgb"), checkpoint
        )
    )


def extract(args) -> None:
    state = load_checkpoint(args.checkpoint)
    mesh_config = state.config.mesh
    if args.resolution is not None:
        mesh_config = replace(mesh_config, resolution=args.resolution)
    if args.no_colors:
        mesh_config = replace(mesh_config, vertex_colors=False)
    mesh = extract_mesh(state.sdf_field, mesh_config, state.color_field)
    if mesh.is_empty:
        raise ValueError(
            "The field has no zero crossing on the {}^3 grid; no mesh written.".format(
                mesh_config.resolution
            )
        )
    with removed_on_failure(args.output):
        export_mesh(mesh, args.output, args.format, binary=not args.ascii)
    print(
        "Wrote mesh with {} vertices and {} faces to {}".format(
            mesh.n_vertices, mesh.n_faces, args.output
        )
    )


def _reference_points(args, dataset, n_points: int, seed: int) -> np.ndarray:
    if args.reference is not None:
        return io.read_points(args.reference)
    scene = None
    if args.scene is not None:
        scene = load_scene(args.scene)
    elif dataset is not None:
        scene = load_dataset_scene(dataset.root)
    if scene is None:
        raise ValueError(
            "No reference: give --reference, --scene or a dataset with a scene spec."
        )
    return sample_scene_surface(scene, n_points, seed)


def evaluate(args) -> None:
    config = load_config(args.config, args.overrides).evaluation
    if args.n_points is not None:
        config = replace(config, n_points=args.n_points)
    if args.squared:
        config = replace(config, squared=True)
    if args.dilation is not None:
        config = replace(config, hull_dilation=args.dilation)

    mesh = load_mesh(args.mesh)
    if mesh.is_empty:
        raise ValueError("{} holds no face.".format(args.mesh))
    dataset = load_dataset(args.dataset) if args.dataset is not None else None
    reference = _reference_points(args, dataset, config.n_points, config.seed)
    silhouettes = SilhouetteSet.from_dataset(dataset) if dataset is not None else None
    psnr = []
    if args.checkpoint is not None:
        if dataset is None:
            raise ValueError("--checkpoint needs --dataset to measure PSNR.")
        psnr = view_psnr(load_checkpoint(args.checkpoint), dataset)

    report = evaluate_mesh(
        mesh, reference, silhouettes, config, psnr, name=os.path.basename(args.mesh)
    )
    outputs = [p for p in (args.output_csv, args.output_text) if p is not None]
    with removed_on_failure(*outputs):
        if args.output_csv is not None:
            report.write_csv(args.output_csv)
        if args.output_text is not None:
            report.write_text(args.output_text)
    print(report.to_text())


def _ablation_run(
    index: int, params, config, dataset_dir: str, out_dir: str, reference
) -> dict:
    run_dir = os.path.join(out_dir, "run_{:02d}".format(index))
    overrides = ["{}={}".format(key, value) for key, value in sorted(params.items())]
    config = load_config(None, overrides, base=config)
    dataset = load_dataset(dataset_dir)
    trainer = Trainer(config, dataset, run_dir, reference_points=reference)
    start = time.perf_counter()
    trainer.run()
    seconds = time.perf_counter() - start
    mesh_config = replace(config.mesh, vertex_colors=False)
    mesh = extract_mesh(trainer.state.sdf_field, mesh_config)
    row = dict(params)
    row.update(
        run=index,
        train_seconds=seconds,
        final_l_rgb=trainer.state.metric_log[-1]["l_rgb"]
        if trainer.state.metric_log
        else None,
    )
    if mesh.is_empty:
        logger.warning("Run {} produced an empty mesh.".format(index))
        return row
    export_mesh(mesh, os.path.join(run_dir, "mesh.ply"))
    report = evaluate_mesh(
        mesh,
        reference,
        SilhouetteSet.from_dataset(dataset),
        config.evaluation,
        name="run {}".format(index),
    )
    row.update({k: v for k, v in report.to_row().items() if k in REPORT_FIELDS})
    return row


def ablation_grid(
    resolutions: Sequence[int],
    w_geo: Sequence[float],
    refresh_periods: Sequence[int],
) -> List[dict]:
    """Every combination of buffer resolution, geometric weight and refresh
    period, as dot-list override mappings."""
    return list(
        ParameterGrid(
            {
                "buffer.resolution": list(resolutions),
                "loss.w_geo": list(w_geo),
                "buffer.refresh_period": list(refresh_periods),
            }
        )
    )


def ablate(args) -> None:
    config = _load_config(args, progress=False)
    if args.iterations is not None:
        config = replace(config, iterations=args.iterations)
    scene = load_scene(args.scene)
    grid = ablation_grid(args.resolutions, args.w_geo, args.refresh_periods)
    with removed_on_failure(args.out_dir):
        dataset_dir = os.path.join(args.out_dir, "dataset")
        generate_dataset(scene, dataset_dir)
        reference = sample_scene_surface(
            scene, config.evaluation.n_points, config.evaluation.seed
        )
        logger.info("Ablation over {} configurations.".format(len(grid)))
        rows = Parallel(n_jobs=args.n_jobs)(
            delayed(_ablation_run)(
                index, params, config, dataset_dir, args.out_dir, reference
            )
            for index, params in enumerate(grid)
        )
        path = os.path.join(args.out_dir, "ablation.csv")
        io.write_csv(path, rows, ABLATION_FIELDS)
    print("Wrote {} ablation rows to {}".format(len(rows), path))


# Parser ##############################################################################


def _add_config_arguments(parser) -> None:
    parser.add_argument("--config", help="YAML configuration file.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Configuration override, e.g. loss.w_geo=0.01 (repeatable).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfvote",
        description="SDF surface reconstruction with multi-view weight voting.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (-vv: debug)."
    )
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only.")
    parser.add_argument(
        "--no-progress", action="store_true", help="Hide the progress bar."
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser(
        "generate-scene", help="Render a synthetic dataset from a scene spec."
    )
    p.add_argument("scene", help="Fixture name (sphere, composite, cluttered) or YAML.")
    p.add_argument("out_dir", help="Dataset directory to create.")
    p.add_argument("--views", type=int, help="Number of views (default: the rig's).")
    p.add_argument(
        "--resolution",
        type=int,
        nargs=2,
        metavar=("WIDTH", "HEIGHT"),
        help="Image size (default: the rig's).",
    )
    p.set_defaults(func=generate_scene)

    p = commands.add_parser("train", help="Train the fields on a dataset.")
    p.add_argument("dataset", help="Dataset directory.")
    p.add_argument("out_dir", help="Run directory (checkpoint, metrics.csv).")
    _add_config_arguments(p)
    p.add_argument(
        "--resume", action="store_true", help="Continue from out_dir/checkpoint.npz."
    )
    p.set_defaults(func=train)

    p = commands.add_parser("extract-mesh", help="Extract a mesh from a checkpoint.")
    p.add_argument("checkpoint", help="Checkpoint file.")
    p.add_argument("output", help="Mesh file ({}).".format(", ".join(MESH_FORMATS)))
    p.add_argument("--resolution", type=int, help="Grid resolution per axis.")
    p.add_argument(
        "--format", choices=MESH_FORMATS, help="Mesh format (default: from the name)."
    )
    p.add_argument("--ascii", action="store_true", help="Write ASCII PLY.")
    p.add_argument(
        "--no-colors", action="store_true", help="Skip the vertex colors."
    )
    p.set_defaults(func=extract)

    p = commands.add_parser("evaluate", help="Measure a mesh.")
    p.add_argument("mesh", help="Mesh file (ply, obj).")
    p.add_argument("--dataset", help="Dataset whose masks define the visual hull.")
    p.add_argument("--reference", help="Reference point file (ply or text).")
    p.add_argument("--scene", help="Scene to sample reference points from.")
    p.add_argument("--checkpoint", help="Checkpoint to measure the view PSNR of.")
    p.add_argument("--n-points", type=int, help="Points sampled on the mesh.")
    p.add_argument(
        "--squared", action="store_true", help="Squared Chamfer distances."
    )
    p.add_argument("--dilation", type=int, help="Mask dilation in pixels.")
    p.add_argument("--output-csv", help="Write the report as CSV.")
    p.add_argument("--output-text", help="Write the report as text.")
    _add_config_arguments(p)
    p.set_defaults(func=evaluate)

    p = commands.add_parser(
        "ablate", help="Sweep buffer resolution, w_geo and refresh period."
    )
    p.add_argument("scene", help="Fixture name or scene YAML.")
    p.add_argument("out_dir", help="Directory of the sweep.")
    _add_config_arguments(p)
    p.add_argument("--iterations", type=int, help="Iterations per run.")
    p.add_argument(
        "--resolutions", type=int, nargs="+", default=[32, 64, 128], metavar="R"
    )
    p.add_argument(
        "--w-geo", type=float, nargs="+", default=[0.0, 0.01, 0.1], metavar="W"
    )
    p.add_argument(
        "--refresh-periods",
        type=int,
        nargs="+",
        default=[0, 4],
        metavar="P",
        help="Views between buffer refreshes (0: once per pass).",
    )
    p.add_argument("--n-jobs", type=int, default=1, help="Parallel runs.")
    p.set_defaults(func=ablate)
    return parser


def _configure_logging(args) -> None:
    if args.quiet:
        level = logging.WARNING
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        args.func(args)
    except KeyboardInterrupt:
        print("surfvote: interrupted", file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("Command failed.", exc_info=True)
        print("surfvote {}: error: {}".format(args.command, e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
