"""Training checkpoints.

A checkpoint is a single ``.npz`` archive (numpy's zip of ``.npy`` arrays, all
little-endian, no pickled objects):

- ``format_version``: int64 scalar, currently 1;
- ``config``: the configuration as YAML text;
- ``state``: JSON text with the iteration, the view cursor, the random generator
  states, the metric log and the buffer counters;
- ``param/<name>``: every trained array (``sdf/w0`` ... ``color/b2``, ``log_s``);
- ``adam_m/<name>``, ``adam_v/<name>``, ``adam_step``: optimizer moments;
- ``buffer/counts``, ``buffer/weight_sums``, ``buffer/sdf_sums``: accumulators;
- ``snapshot/counts``, ``snapshot/weight_mean``, ``snapshot/sdf_mean``,
  ``snapshot/valid``: the frozen buffer epoch, when there is one.

Files are written to a temporary name and moved into place, so an interrupted
save never leaves a truncated checkpoint behind.
"""
import json
import logging
import os
import zipfile
from collections import OrderedDict
from typing import Dict

import numpy as np

from surfvote.config import config_from_yaml, config_to_yaml
from surfvote.exceptions import CheckpointError
from surfvote.weight_buffer import BufferSnapshot

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_SNAPSHOT_ARRAYS = ("counts", "weight_mean", "sdf_mean", "valid")
_BUFFER_ARRAYS = ("counts", "weight_sums", "sdf_sums")


def _state_json(state) -> str:
    buffer = state.buffer
    snapshot = buffer.snapshot
    return json.dumps(
        {
            "iteration": state.iteration,
            "view_cursor": state.view_cursor,
            "rngs": OrderedDict(
                (name, rng.bit_generator.state) for name, rng in state.rngs.items()
            ),
            "metric_log": state.metric_log,
            "buffer": {
                "epoch": buffer.epoch,
                "views_seen": buffer.views_seen,
                "dropped": buffer.dropped,
                "snapshot_epoch": None if snapshot is None else snapshot.epoch,
            },
        }
    )


def save_checkpoint(state, path) -> None:
    """Write the training state to ``path``.

    Raises
    ------
    OSError
        If the file cannot be written.
    """
    arrays = OrderedDict()  # type: Dict[str, np.ndarray]
    arrays["format_version"] = np.array(FORMAT_VERSION, dtype=np.int64)
    arrays["config"] = np.array(config_to_yaml(state.config))
    arrays["state"] = np.array(_state_json(state))
    for name, value in state.parameters().items():
        arrays["param/" + name] = value
    optimizer = state.optimizer
    for name in optimizer.m:
        arrays["adam_m/" + name] = optimizer.m[name]
        arrays["adam_v/" + name] = optimizer.v[name]
    arrays["adam_step"] = np.array(optimizer.step_count, dtype=np.int64)
    for name in _BUFFER_ARRAYS:
        arrays["buffer/" + name] = getattr(state.buffer, name)
    snapshot = state.buffer.snapshot
    if snapshot is not None:
        for name in _SNAPSHOT_ARRAYS:
            arrays["snapshot/" + name] = getattr(snapshot, name)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = str(path) + ".tmp"
    try:
        with open(tmp_path, "wb") as f:
            np.savez(f, **arrays)
        os.replace(tmp_path, path)
    finally:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
    logger.info(
        "Saved checkpoint at iteration {} to {}.".format(state.iteration, path)
    )


def _read_archive(path) -> Dict[str, np.ndarray]:
    try:
        with np.load(path, allow_pickle=False) as archive:
            return {name: archive[name] for name in archive.files}
    except FileNotFoundError:
        raise
    except (OSError, ValueError, EOFError, zipfile.BadZipFile) as e:
        raise CheckpointError(
            "{} is not a readable checkpoint (truncated or corrupt): {}".format(
                path, e
            )
        ) from e


def _required(arrays, name: str, path):
    if name not in arrays:
        raise CheckpointError("{} lacks the entry {!r}.".format(path, name))
    return arrays[name]


def load_checkpoint(path):
    """Rebuild the training state saved at ``path``.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    CheckpointError
        If the file is truncated, corrupt, incomplete or of another format
        version.
    """
    # the trainer imports this module
    from surfvote.trainer import LOG_S, init_state

    arrays = _read_archive(path)
    version = int(_required(arrays, "format_version", path))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            "{} has format version {}; this version reads {}.".format(
                path, version, FORMAT_VERSION
            )
        )
    try:
        config = config_from_yaml(str(_required(arrays, "config", path)))
        meta = json.loads(str(_required(arrays, "state", path)))
    except (ValueError, TypeError) as e:
        raise CheckpointError("{} has an unreadable header: {}".format(path, e)) from e

    state = init_state(config)
    params = state.parameters()
    loaded = OrderedDict()  # type: Dict[str, np.ndarray]
    for name, current in params.items():
        value = _required(arrays, "param/" + name, path)
        if value.shape != current.shape:
            raise CheckpointError(
                "{}: parameter {} has shape {}, the configuration expects {}.".format(
                    path, name, value.shape, current.shape
                )
            )
        loaded[name] = value.astype(current.dtype)
    state.sdf_field.load_parameters(loaded)
    state.color_field.load_parameters(loaded)
    state.log_s = loaded[LOG_S].copy()

    optimizer = state.optimizer
    optimizer.step_count = int(_required(arrays, "adam_step", path))
    for name in params:
        if "adam_m/" + name in arrays:
            optimizer.m[name] = arrays["adam_m/" + name].copy()
            optimizer.v[name] = _required(arrays, "adam_v/" + name, path).copy()

    buffer = state.buffer
    for name in _BUFFER_ARRAYS:
        value = _required(arrays, "buffer/" + name, path)
        target = getattr(buffer, name)
        if value.shape != target.shape:
            raise CheckpointError(
                "{}: buffer array {} has shape {}, expected {}.".format(
                    path, name, value.shape, target.shape
                )
            )
        target[...] = value
    buffer_meta = meta["buffer"]
    buffer.epoch = buffer_meta["epoch"]
    buffer.views_seen = buffer_meta["views_seen"]
    buffer.dropped = buffer_meta["dropped"]
    if buffer_meta["snapshot_epoch"] is not None:
        snapshot_arrays = [
            _required(arrays, "snapshot/" + name, path) for name in _SNAPSHOT_ARRAYS
        ]
        buffer.snapshot = BufferSnapshot.from_means(
            buffer.resolution,
            buffer_meta["snapshot_epoch"],
            buffer.contrast,
            *snapshot_arrays
        )

    for name, rng in state.rngs.items():
        rng.bit_generator.state = meta["rngs"][name]
    state.iteration = meta["iteration"]
    state.view_cursor = meta["view_cursor"]
    state.metric_log = meta["metric_log"]
    logger.info(
        "Loaded checkpoint at iteration {} from {}.".format(state.iteration, path)
    )
    return state
