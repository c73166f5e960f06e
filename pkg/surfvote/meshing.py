"""Surface extraction: dense SDF grids, marching cubes and mesh files."""
import logging
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed

from surfvote import io
from surfvote._core.graph import evaluate
from surfvote._core.op import Constant
from surfvote._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRIANGLES
from surfvote.config import MeshConfig
from surfvote.exceptions import NonFiniteError
from surfvote.fields import gradient_tensor, sdf_eval

logger = logging.getLogger(__name__)

MESH_FORMATS = ("ply", "obj")

# Axis and lower-corner offset of every cube edge.
_EDGE_AXIS = np.argmax(
    np.abs(CORNER_OFFSETS[EDGE_CORNERS[:, 1]] - CORNER_OFFSETS[EDGE_CORNERS[:, 0]]),
    axis=-1,
)
_EDGE_LOWER = np.minimum(
    CORNER_OFFSETS[EDGE_CORNERS[:, 0]], CORNER_OFFSETS[EDGE_CORNERS[:, 1]]
)


@dataclass
class TriangleMesh:
    """Vertices (n, 3), triangles (m, 3) of vertex indices, and optional per-vertex
    colors in [0, 1] and normals."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise NonFiniteError("Mesh vertices must be finite.")
        if len(self.faces) and (
            self.faces.min() < 0 or self.faces.max() >= len(self.vertices)
        ):
            raise ValueError("Face indices out of range.")
        repeated = (
            (self.faces[:, 0] == self.faces[:, 1])
            | (self.faces[:, 1] == self.faces[:, 2])
            | (self.faces[:, 0] == self.faces[:, 2])
        )
        if repeated.any():
            raise ValueError(
                "{} faces repeat a vertex index.".format(int(repeated.sum()))
            )
        for name in ("colors", "normals"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                if value.shape != self.vertices.shape:
                    raise ValueError(
                        "{} must have shape {}. Got {}.".format(
                            name, self.vertices.shape, value.shape
                        )
                    )
                setattr(self, name, value)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return self.n_faces == 0

    def triangles(self) -> np.ndarray:
        """Corner positions of every face, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        """Unnormalized geometric normals (twice the face areas long)."""
        corners = self.triangles()
        return np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(), axis=-1)

    def submesh(self, face_mask) -> "TriangleMesh":
        """The mesh made of the selected faces, without unreferenced vertices."""
        faces = self.faces[np.asarray(face_mask, dtype=bool)]
        used, remapped = np.unique(faces, return_inverse=True)
        return TriangleMesh(
            self.vertices[used],
            remapped.reshape(-1, 3),
            None if self.colors is None else self.colors[used],
            None if self.normals is None else self.normals[used],
        )


def grid_coordinates(resolution: int) -> np.ndarray:
    """The ``resolution`` sample positions along each axis, from -1 to 1."""
    return np.linspace(-1.0, 1.0, resolution)


def _sample_slab(field, xs, i, chunk_size) -> np.ndarray:
    y, z = np.meshgrid(xs, xs, indexing="ij")
    points = np.stack([np.full(y.size, xs[i]), y.ravel(), z.ravel()], axis=-1)
    values, _ = sdf_eval(field, points, chunk_size)
    return values.reshape(len(xs), len(xs))


def sample_sdf_grid(
    field: Callable, resolution: int, chunk_size: int = 65536, n_jobs: int = 1
) -> np.ndarray:
    """SDF values on the ``resolution^3`` lattice over [-1, 1]^3.

    ``grid[i, j, k]`` is f at ``(xs[i], xs[j], xs[k])`` with ``xs =
    linspace(-1, 1, resolution)``. Slabs of constant x are evaluated in parallel
    threads when ``n_jobs`` != 1.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8. Got {}.".format(resolution))
    xs = grid_coordinates(resolution)
    slabs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_sample_slab)(field, xs, i, chunk_size) for i in range(resolution)
    )
    grid = np.stack(slabs)
    logger.debug("Sampled a {}^3 SDF grid.".format(resolution))
    return grid


def marching_cubes(grid, iso: float = 0.0, bounds=(-1.0, 1.0)) -> TriangleMesh:
    """Extract the ``iso`` level set of a scalar grid as a triangle mesh.

    Vertices are placed on the cube edges whose ends straddle the iso value by
    linear interpolation, and shared between the cubes of an edge; they are
    numbered in order of first use, cubes taken in C order and edges in table
    order. Triangles are wound so that their normals point towards increasing
    values (outwards for an SDF). A grid without a sign change gives an empty
    mesh.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or min(grid.shape) < 2:
        raise ValueError("grid must be 3-D with at least 2 samples per axis.")
    if not np.all(np.isfinite(grid)):
        raise NonFiniteError("The grid holds non-finite values.")
    shape = np.array(grid.shape)
    below = grid < iso

    n_cubes = tuple(shape - 1)
    case = np.zeros(n_cubes, dtype=np.int64)
    for corner, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        corner_below = below[
            dx : dx + n_cubes[0], dy : dy + n_cubes[1], dz : dz + n_cubes[2]
        ]
        case |= corner_below.astype(np.int64) << corner
    case = case.ravel()
    active = np.flatnonzero((case != 0) & (case != 255))
    if len(active) == 0:
        return TriangleMesh.empty()

    rows = TRIANGLES[case[active]]
    cube_of_entry = np.repeat(active, rows.shape[1])
    local_edge = rows.ravel()
    used = local_edge >= 0
    cube_of_entry, local_edge = cube_of_entry[used], local_edge[used]

    cube_ijk = np.stack(np.unravel_index(cube_of_entry, n_cubes), axis=-1)
    lower = cube_ijk + _EDGE_LOWER[local_edge]
    axis = _EDGE_AXIS[local_edge]
    edge_key = axis * int(np.prod(shape)) + np.ravel_multi_index(
        tuple(lower.T), tuple(shape)
    )

    keys, first, inverse = np.unique(edge_key, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    faces = rank[inverse].reshape(-1, 3)[:, [0, 2, 1]]

    # interpolate along the unique edges, in vertex order
    keys = keys[order]
    edge_axis = keys // int(np.prod(shape))
    start = np.stack(
        np.unravel_index(keys % int(np.prod(shape)), tuple(shape)), axis=-1
    )
    end = start + np.eye(3, dtype=np.int64)[edge_axis]
    v_start = grid[tuple(start.T)]
    v_end = grid[tuple(end.T)]
    t = (iso - v_start) / (v_end - v_start)
    t = np.clip(t, 0.0, 1.0)
    low, high = bounds
    spacing = (high - low) / (shape - 1)
    vertices = low + (start + t[:, None] * (end - start)) * spacing

    mesh = TriangleMesh(vertices, faces)
    logger.debug(
        "Marching cubes: {} vertices, {} faces.".format(mesh.n_vertices, mesh.n_faces)
    )
    return mesh


def vertex_colors(
    mesh: TriangleMesh,
    color_field: Callable,
    sdf_field: Callable,
    chunk_size: int = 65536,
) -> TriangleMesh:
    """Color every vertex with the color field seen head-on: the normal is the
    normalized SDF gradient at the vertex and the view direction its opposite.
    Returns a copy of the mesh with colors and normals.
    """
    if mesh.n_vertices == 0:
        raise ValueError("Cannot color an empty mesh.")
    colors, normals = [], []
    for start in range(0, mesh.n_vertices, chunk_size):
        chunk = Constant(mesh.vertices[start : start + chunk_size])
        x, _, feature, grad = gradient_tensor(sdf_field, chunk)
        if feature is None:
            grad_value, feature_value = evaluate(grad), None
        else:
            grad_value, feature_value = evaluate([grad, feature])
        length = np.linalg.norm(grad_value, axis=-1, keepdims=True)
        normal = grad_value / np.maximum(length, 1e-12)
        rgb = color_field(x, -normal, normal, feature_value)
        colors.append(np.asarray(evaluate(rgb)))
        normals.append(normal)
    return replace(mesh, colors=np.concatenate(colors), normals=np.concatenate(normals))


def extract_mesh(
    sdf_field: Callable,
    config: Optional[MeshConfig] = None,
    color_field: Optional[Callable] = None,
) -> TriangleMesh:
    """Sample the field on a grid, run marching cubes and (given a color field)
    color the vertices."""
    config = config if config is not None else MeshConfig()
    grid = sample_sdf_grid(
        sdf_field, config.resolution, config.chunk_size, config.n_jobs
    )
    mesh = marching_cubes(grid, config.iso)
    if color_field is not None and config.vertex_colors and not mesh.is_empty:
        mesh = vertex_colors(mesh, color_field, sdf_field, config.chunk_size)
    return mesh


def _mesh_format(path, fmt: Optional[str]) -> str:
    fmt = (fmt or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt not in MESH_FORMATS:
        raise ValueError(
            "Unsupported mesh format {!r}. Expected one of {}.".format(
                fmt, ", ".join(MESH_FORMATS)
            )
        )
    return fmt


def export_mesh(
    mesh: TriangleMesh, path, fmt: Optional[str] = None, binary: bool = True
) -> None:
    """Write a mesh as PLY (binary little-endian by default, or ASCII) or OBJ,
    the format being taken from the extension unless given."""
    fmt = _mesh_format(path, fmt)
    try:
        if fmt == "ply":
            io.write_ply(
                path, mesh.vertices, mesh.faces, mesh.colors, mesh.normals, binary
            )
        else:
            io.write_obj(path, mesh.vertices, mesh.faces, mesh.colors)
    except OSError as e:
        raise OSError("Could not write mesh to {}: {}".format(path, e)) from e
    logger.info(
        "Wrote mesh with {} vertices and {} faces to {}.".format(
            mesh.n_vertices, mesh.n_faces, path
        )
    )


def load_mesh(path, fmt: Optional[str] = None) -> TriangleMesh:
    fmt = _mesh_format(path, fmt)
    data = io.read_ply(path) if fmt == "ply" else io.read_obj(path)
    return TriangleMesh(
        data["vertices"], data["faces"], data["colors"], data["normals"]
    )
