"""Grid buffer voting multi-view rendering weights into surface evidence.

The buffer is a dense R^3 grid over [-1, 1]^3. While rendering, every recorded
sample adds one hit (or one per ray, see ``hit_mode``), its weight and its SDF
value to the cell it falls in. Averaging per cell gives the voted weight ``w_t``
and SDF ``f_t`` of the cells with at least one hit; the other cells are invalid.

The buffer is double-buffered: ``refresh`` freezes the averages into an
immutable :class:`BufferSnapshot` (the supervision for the following iterations)
and zeroes the accumulators.
"""
import logging
import struct
import threading
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from surfvote._core.utils import as_rng, check_finite, check_points
from surfvote.config import HIT_MODES
from surfvote.exceptions import DegenerateBufferError

logger = logging.getLogger(__name__)

DUMP_MAGIC = b"SVGB"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIII")


def cell_index(points, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """Flat cell index of every point of shape (n, 3), and whether the point lies
    in [-1, 1]^3 (bounds included). Indices of outside points are meaningless."""
    points = np.asarray(points, dtype=np.float64)
    inside = np.all(np.abs(points) <= 1.0, axis=-1)
    ijk = np.floor((points + 1.0) * 0.5 * resolution).astype(np.int64)
    ijk = np.clip(ijk, 0, resolution - 1)
    flat = np.ravel_multi_index(tuple(ijk.T), (resolution,) * 3)
    return flat, inside


def cell_bounds(flat_index, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper corners of cells given by flat index."""
    ijk = np.stack(np.unravel_index(np.asarray(flat_index), (resolution,) * 3), axis=-1)
    size = 2.0 / resolution
    lower = ijk * size - 1.0
    return lower, lower + size


def finalize_vote(
    counts, weight_sums, sdf_sums
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell averages ``(w_t, f_t, valid)``; averages are 0 where invalid."""
    counts = np.asarray(counts)
    valid = counts > 0
    safe = np.where(valid, counts, 1)
    weight_mean = np.where(valid, weight_sums / safe, 0.0)
    sdf_mean = np.where(valid, sdf_sums / safe, 0.0)
    return weight_mean, sdf_mean, valid


def apply_contrast(weights, contrast: float, valid=None) -> np.ndarray:
    """``max(w + contrast * (w - mean(w)), 0)`` on the valid cells, the mean being
    the uniform mean over valid cells. Invalid cells are left untouched.

    Raises
    ------
    DegenerateBufferError
        If no cell is valid.
    """
    if contrast < 0:
        raise ValueError("contrast must be >= 0. Got {}.".format(contrast))
    weights = np.asarray(weights, dtype=np.float64)
    valid = np.ones(weights.shape, dtype=bool) if valid is None else np.asarray(valid)
    if not valid.any():
        raise DegenerateBufferError("The buffer has no valid cell.")
    adjusted = weights.copy()
    selected = weights[valid]
    deviation = selected - selected.mean()
    adjusted[valid] = np.maximum(selected + contrast * deviation, 0.0)
    return adjusted


@dataclass(frozen=True, eq=False)
class BufferSnapshot:
    """Frozen averages of one buffer epoch. Arrays are read-only."""

    resolution: int
    epoch: int
    contrast: float
    counts: np.ndarray
    weight_mean: np.ndarray
    sdf_mean: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_sums(cls, resolution, epoch, contrast, counts, weight_sums, sdf_sums):
        weight_mean, sdf_mean, valid = finalize_vote(counts, weight_sums, sdf_sums)
        return cls.from_means(
            resolution, epoch, contrast, counts, weight_mean, sdf_mean, valid
        )

    @classmethod
    def from_means(
        cls, resolution, epoch, contrast, counts, weight_mean, sdf_mean, valid
    ):
        arrays = [np.array(a) for a in (counts, weight_mean, sdf_mean, valid)]
        for array in arrays:
            array.setflags(write=False)
        return cls(int(resolution), int(epoch), float(contrast), *arrays)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def adjusted_weights(self) -> np.ndarray:
        return apply_contrast(self.weight_mean, self.contrast, self.valid)

    def lookup_sdf(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Averaged SDF, hit count and validity of the cell owning every point.
        Points outside [-1, 1]^3 or in never-hit cells are invalid (SDF 0)."""
        points = check_points("points", points)
        flat, inside = cell_index(points, self.resolution)
        valid = inside & self.valid.ravel()[flat]
        sdf = np.where(valid, self.sdf_mean.ravel()[flat], 0.0)
        counts = np.where(valid, self.counts.ravel()[flat], 0)
        return sdf, counts, valid

    def resample_targets(self, count: int, rng=None) -> np.ndarray:
        """Draw ``count`` points: cells i.i.d. proportionally to the contrast
        adjusted weights, then a uniform position inside each drawn cell.

        Raises
        ------
        DegenerateBufferError
            If no valid cell carries positive weight.
        """
        rng = as_rng(rng)
        adjusted = self.adjusted_weights().ravel()
        total = adjusted.sum()
        if not total > 0:
            raise DegenerateBufferError(
                "Cannot resample targets: the buffer holds no positive weight."
            )
        cells = rng.choice(adjusted.size, size=count, p=adjusted / total)
        lower, upper = cell_bounds(cells, self.resolution)
        return lower + rng.uniform(size=(count, 3)) * (upper - lower)


class WeightGridBuffer:
    """Accumulator of rendering weights and SDF values over a dense grid.

    Parameters
    ----------
    resolution
        Cells per axis.

    contrast
        Contrast applied to the voted weights before resampling.

    refresh_period
        Number of views between refreshes. 0 means one pass over all views.

    hit_mode
        ``"sample"`` counts one hit per recorded sample; ``"ray"`` counts one hit
        per (ray, cell) pair. Weight and SDF sums are the same in both modes.
    """

    def __init__(
        self,
        resolution: int = 64,
        contrast: float = 0.5,
        refresh_period: int = 0,
        hit_mode: str = "sample",
    ):
        if resolution < 1:
            raise ValueError("resolution must be >= 1.")
        if contrast < 0 or refresh_period < 0:
            raise ValueError("contrast and refresh_period must be >= 0.")
        if hit_mode not in HIT_MODES:
            raise ValueError("Unknown hit_mode {!r}.".format(hit_mode))
        self.resolution = resolution
        self.contrast = contrast
        self.refresh_period = refresh_period
        self.hit_mode = hit_mode
        self._lock = threading.Lock()
        shape = (resolution,) * 3
        self.counts = np.zeros(shape, dtype=np.int64)
        self.weight_sums = np.zeros(shape)
        self.sdf_sums = np.zeros(shape)
        self.epoch = 0
        self.views_seen = 0
        self.dropped = 0
        self.snapshot = None  # type: Optional[BufferSnapshot]

    @classmethod
    def from_config(cls, config) -> "WeightGridBuffer":
        return cls(
            config.resolution, config.contrast, config.refresh_period, config.hit_mode
        )

    @property
    def n_recorded(self) -> int:
        return int(self.counts.sum())

    def record(self, positions, weights, sdf, ray_ids=None) -> None:
        """Vote samples into the buffer.

        ``positions`` has shape (..., 3) and ``weights``, ``sdf`` the matching
        leading shape. In ``ray`` hit mode the ray of each sample is given by
        ``ray_ids`` or, for (n_rays, n_samples, 3) positions, by the first axis.
        Samples outside [-1, 1]^3 are ignored and counted in ``dropped``.

        Raises
        ------
        NonFiniteError
            If a weight, SDF value or position is not finite.
        ValueError
            If a weight is negative or the shapes do not match.
        """
        positions = np.asarray(positions, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        sdf = np.asarray(sdf, dtype=np.float64)
        if positions.shape[-1] != 3 or positions.shape[:-1] != weights.shape:
            raise ValueError(
                "positions {} and weights {} do not match.".format(
                    positions.shape, weights.shape
                )
            )
        if sdf.shape != weights.shape:
            raise ValueError(
                "sdf {} and weights {} do not match.".format(sdf.shape, weights.shape)
            )
        check_finite("positions", positions)
        check_finite("weights", weights)
        check_finite("sdf", sdf)
        if np.any(weights < 0):
            raise ValueError("weights must be >= 0.")

        if ray_ids is None:
            if positions.ndim == 3:
                ray_ids = np.repeat(np.arange(positions.shape[0]), positions.shape[1])
            else:
                ray_ids = np.arange(weights.size)
        ray_ids = np.asarray(ray_ids).ravel()

        flat, inside = cell_index(positions.reshape(-1, 3), self.resolution)
        cells = flat[inside]
        n_cells = self.resolution ** 3
        if self.hit_mode == "ray":
            pairs = np.unique(ray_ids[inside] * n_cells + cells)
            hit_cells = pairs % n_cells
        else:
            hit_cells = cells
        hits = np.bincount(hit_cells, minlength=n_cells)
        weight_sums = np.bincount(
            cells, weights=weights.ravel()[inside], minlength=n_cells
        )
        sdf_sums = np.bincount(cells, weights=sdf.ravel()[inside], minlength=n_cells)

        with self._lock:
            self.counts += hits.reshape(self.counts.shape)
            self.weight_sums += weight_sums.reshape(self.counts.shape)
            self.sdf_sums += sdf_sums.reshape(self.counts.shape)
            self.dropped += int(np.count_nonzero(~inside))

    def finalize_vote(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        with self._lock:
            return finalize_vote(self.counts, self.weight_sums, self.sdf_sums)

    def take_snapshot(self) -> BufferSnapshot:
        with self._lock:
            return BufferSnapshot.from_sums(
                self.resolution,
                self.epoch,
                self.contrast,
                self.counts,
                self.weight_sums,
                self.sdf_sums,
            )

    def refresh(self) -> BufferSnapshot:
        """Freeze the current averages as the snapshot, zero the accumulators and
        start a new epoch. Returns the snapshot."""
        snapshot = self.take_snapshot()
        with self._lock:
            self.snapshot = snapshot
            self.counts[...] = 0
            self.weight_sums[...] = 0.0
            self.sdf_sums[...] = 0.0
            self.epoch += 1
        logger.debug(
            "Buffer refreshed (epoch {}, {} valid cells).".format(
                self.epoch, snapshot.n_valid
            )
        )
        return snapshot

    def advance_view(self, n_views: int) -> Optional[BufferSnapshot]:
        """Count one more rendered view and refresh when the refresh period is
        reached. Returns the new snapshot if a refresh happened."""
        period = self.refresh_period if self.refresh_period > 0 else n_views
        self.views_seen += 1
        if self.views_seen % period == 0:
            return self.refresh()
        return None

    def dump(self, path) -> None:
        """Write the accumulators as a dense grid file.

        Layout (little-endian): magic ``SVGB``, uint32 version, uint32 resolution
        R, uint32 epoch, then R^3 int64 hit counts, R^3 float64 weight sums and
        R^3 float64 SDF sums, each in C order (x slowest).
        """
        with self._lock, open(path, "wb") as f:
            header = (DUMP_MAGIC, DUMP_VERSION, self.resolution, self.epoch)
            f.write(_DUMP_HEADER.pack(*header))
            f.write(self.counts.astype("<i8").tobytes())
            f.write(self.weight_sums.astype("<f8").tobytes())
            f.write(self.sdf_sums.astype("<f8").tobytes())

    @classmethod
    def load_dump(cls, path, **kwargs) -> "WeightGridBuffer":
        """Read a file written by :meth:`dump` into a new buffer."""
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < _DUMP_HEADER.size:
            raise ValueError("{} is too short to be a buffer dump.".format(path))
        magic, version, resolution, epoch = _DUMP_HEADER.unpack_from(data)
        if magic != DUMP_MAGIC:
            raise ValueError("{} is not a buffer dump.".format(path))
        if version != DUMP_VERSION:
            raise ValueError(
                "Unsupported buffer dump version {} in {}.".format(version, path)
            )
        n_cells = resolution ** 3
        if len(data) != _DUMP_HEADER.size + 24 * n_cells:
            raise ValueError("{} is truncated.".format(path))
        buffer = cls(resolution=resolution, **kwargs)
        offset = _DUMP_HEADER.size
        arrays = []
        for dtype in ("<i8", "<f8", "<f8"):
            array = np.frombuffer(data, dtype=dtype, count=n_cells, offset=offset)
            arrays.append(array)
            offset += 8 * n_cells
        shape = (resolution,) * 3
        buffer.counts[...] = arrays[0].reshape(shape)
        buffer.weight_sums[...] = arrays[1].reshape(shape)
        buffer.sdf_sums[...] = arrays[2].reshape(shape)
        buffer.epoch = epoch
        return buffer
