"""Mesh evaluation: Chamfer distance to reference points, silhouette hull
filtering and the mesh-noise ratio.

A face is inside the visual hull when each of its three vertices projects inside
the silhouette of every view that sees it. A view does not constrain a vertex
behind its camera or projecting outside its image. The mesh-noise ratio is the
percentage of faces outside the hull.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from surfvote import io
from surfvote._core.utils import as_rng, check_points
from surfvote.config import EvaluationConfig
from surfvote.meshing import TriangleMesh
from surfvote.refinement import chamfer_one_way
from surfvote.renderer import Camera

logger = logging.getLogger(__name__)

REPORT_FIELDS = [
    "name",
    "unmasked_cd",
    "masked_cd",
    "accuracy",
    "completeness",
    "noise_ratio",
    "mean_psnr",
    "n_vertices",
    "n_faces",
    "n_faces_removed",
    "n_points",
    "squared",
    "hull_dilation",
]


def sample_mesh_points(mesh: TriangleMesh, count: int, rng=None) -> np.ndarray:
    """``count`` points uniformly distributed over the mesh area: faces are drawn
    with probability proportional to their area, then a uniform barycentric
    position inside the face.

    Raises
    ------
    ValueError
        If the mesh has no area or ``count`` < 1.
    """
    if count < 1:
        raise ValueError("count must be >= 1.")
    rng = as_rng(rng)
    areas = mesh.face_areas() if mesh.n_faces else np.zeros(0)
    total = areas.sum()
    if not total > 0:
        raise ValueError("Cannot sample points on a mesh without area.")
    faces = rng.choice(mesh.n_faces, size=count, p=areas / total)
    u, v = rng.uniform(size=(2, count))
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    corners = mesh.triangles()[faces]
    return (
        corners[:, 0]
        + u[:, None] * (corners[:, 1] - corners[:, 0])
        + v[:, None] * (corners[:, 2] - corners[:, 0])
    )


def chamfer_components(pred, ref, squared: bool = False) -> Tuple[float, float]:
    """Accuracy (mean distance from predicted to reference points) and
    completeness (reference to predicted)."""
    pred = check_points("pred", pred)
    ref = check_points("ref", ref)
    return (
        chamfer_one_way(pred, ref, squared=squared),
        chamfer_one_way(ref, pred, squared=squared),
    )


def chamfer_eval(pred, ref, squared: bool = False) -> float:
    """Bidirectional mean Chamfer distance, the average of accuracy and
    completeness. Distances are plain Euclidean unless ``squared``."""
    accuracy, completeness = chamfer_components(pred, ref, squared)
    return 0.5 * (accuracy + completeness)


def dilate_mask(mask, pixels: int) -> np.ndarray:
    """Binary dilation by a (2 pixels + 1)^2 square."""
    mask = np.asarray(mask, dtype=bool)
    if pixels <= 0:
        return mask
    padded = np.pad(mask, pixels)
    height, width = mask.shape
    out = np.zeros_like(mask)
    for dy in range(2 * pixels + 1):
        for dx in range(2 * pixels + 1):
            out |= padded[dy : dy + height, dx : dx + width]
    return out


@dataclass
class SilhouetteSet:
    """Binary masks (h, w) with the cameras they were seen from."""

    masks: List[np.ndarray]
    cameras: List[Camera]

    def __post_init__(self):
        if len(self.masks) != len(self.cameras):
            raise ValueError(
                "Got {} masks for {} cameras.".format(
                    len(self.masks), len(self.cameras)
                )
            )
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]
        for i, (mask, camera) in enumerate(zip(self.masks, self.cameras)):
            if mask.shape != (camera.height, camera.width):
                raise ValueError(
                    "Mask {} has shape {} but its camera images {}x{}.".format(
                        i, mask.shape, camera.width, camera.height
                    )
                )

    def __len__(self):
        return len(self.masks)

    @classmethod
    def from_dataset(cls, dataset) -> "SilhouetteSet":
        return cls(list(dataset.masks), list(dataset.cameras))

    def subset(self, views: Sequence[int]) -> "SilhouetteSet":
        return SilhouetteSet(
            [self.masks[i] for i in views], [self.cameras[i] for i in views]
        )

    def dilated(self, pixels: int) -> "SilhouetteSet":
        return SilhouetteSet([dilate_mask(m, pixels) for m in self.masks], self.cameras)


def points_inside_hull(points, silhouettes: SilhouetteSet) -> np.ndarray:
    """Whether each point lies inside the visual hull of the silhouettes."""
    points = check_points("points", np.asarray(points, dtype=np.float64))
    inside = np.ones(len(points), dtype=bool)
    for mask, camera in zip(silhouettes.masks, silhouettes.cameras):
        uv, depth = camera.project(points)
        with np.errstate(invalid="ignore"):
            seen = (
                (depth > 0)
                & (uv[:, 0] >= 0)
                & (uv[:, 0] < camera.width)
                & (uv[:, 1] >= 0)
                & (uv[:, 1] < camera.height)
            )
        cols = np.floor(uv[seen, 0]).astype(np.int64)
        rows = np.floor(uv[seen, 1]).astype(np.int64)
        carved = np.zeros(len(points), dtype=bool)
        carved[seen] = ~mask[rows, cols]
        inside &= ~carved
    return inside


def visual_hull_filter(
    mesh: TriangleMesh, silhouettes: SilhouetteSet, dilation: int = 0
) -> Tuple[TriangleMesh, int]:
    """The faces of the mesh inside the visual hull, and the number of faces
    removed. ``dilation`` grows the masks by that many pixels first.

    Raises
    ------
    ValueError
        If no silhouette is given.
    """
    if len(silhouettes) == 0:
        raise ValueError("visual_hull_filter needs at least one silhouette.")
    if dilation:
        silhouettes = silhouettes.dilated(dilation)
    if mesh.n_faces == 0:
        return mesh, 0
    vertex_inside = points_inside_hull(mesh.vertices, silhouettes)
    face_inside = vertex_inside[mesh.faces].all(axis=-1)
    n_removed = int(np.count_nonzero(~face_inside))
    logger.debug(
        "Hull filter removed {} of {} faces.".format(n_removed, mesh.n_faces)
    )
    return mesh.submesh(face_inside), n_removed


def mesh_noise_ratio(
    mesh: TriangleMesh, silhouettes: SilhouetteSet, dilation: int = 0
) -> float:
    """Percentage of the faces outside the visual hull.

    Raises
    ------
    ValueError
        If the mesh has no face.
    """
    if mesh.n_faces == 0:
        raise ValueError("mesh_noise_ratio needs a non-empty mesh.")
    _, n_removed = visual_hull_filter(mesh, silhouettes, dilation)
    return 100.0 * n_removed / mesh.n_faces


def masked_cd(
    mesh: TriangleMesh,
    silhouettes: SilhouetteSet,
    ref_points,
    n_points: int = 10000,
    seed: int = 0,
    squared: bool = False,
    dilation: int = 0,
) -> float:
    """Chamfer distance between points sampled on the hull-filtered mesh and the
    reference points. Sampling uses ``seed``, like the unmasked distance.

    Raises
    ------
    ValueError
        If the hull filter removes every face.
    """
    inside, _ = visual_hull_filter(mesh, silhouettes, dilation)
    if inside.n_faces == 0:
        raise ValueError("The hull filter removed every face of the mesh.")
    points = sample_mesh_points(inside, n_points, np.random.default_rng(seed))
    return chamfer_eval(points, ref_points, squared)


@dataclass
class EvalReport:
    """Measurements of one mesh. ``noise_ratio`` is in percent."""

    unmasked_cd: float
    noise_ratio: float
    masked_cd: Optional[float] = None
    accuracy: Optional[float] = None
    completeness: Optional[float] = None
    psnr: List[float] = field(default_factory=list)
    n_vertices: int = 0
    n_faces: int = 0
    n_faces_removed: int = 0
    parameters: Dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.noise_ratio <= 100.0:
            raise ValueError(
                "noise_ratio must be in [0, 100]. Got {}.".format(self.noise_ratio)
            )

    @property
    def mean_psnr(self) -> Optional[float]:
        return float(np.mean(self.psnr)) if self.psnr else None

    def to_row(self) -> Dict:
        row = asdict(self)
        row.update(self.parameters)
        row["mean_psnr"] = self.mean_psnr
        return row

    def to_text(self) -> str:
        def number(value, fmt="{:.6f}"):
            return "n/a" if value is None else fmt.format(value)

        lines = [
            "Evaluation report" + (" ({})".format(self.name) if self.name else ""),
            "  unmasked CD     : {}".format(number(self.unmasked_cd)),
            "  masked CD       : {}".format(number(self.masked_cd)),
            "  accuracy        : {}".format(number(self.accuracy)),
            "  completeness    : {}".format(number(self.completeness)),
            "  mesh noise      : {:.2f}% ({} of {} faces outside the hull)".format(
                self.noise_ratio, self.n_faces_removed, self.n_faces
            ),
            "  mean PSNR       : {}".format(number(self.mean_psnr, "{:.2f} dB")),
            "  vertices/faces  : {}/{}".format(self.n_vertices, self.n_faces),
        ]
        for key, value in sorted(self.parameters.items()):
            lines.append("  {:<16}: {}".format(key, value))
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        io.write_csv(path, [self.to_row()], REPORT_FIELDS)

    def write_text(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_text() + "\n")


def evaluate_mesh(
    mesh: TriangleMesh,
    ref_points,
    silhouettes: Optional[SilhouetteSet] = None,
    config: Optional[EvaluationConfig] = None,
    psnr: Sequence[float] = (),
    name: str = "",
) -> EvalReport:
    """Unmasked CD against the reference points and, given silhouettes, the
    mesh-noise ratio and the masked CD."""
    config = config if config is not None else EvaluationConfig()
    ref_points = check_points("ref_points", ref_points)
    rng = np.random.default_rng(config.seed)
    points = sample_mesh_points(mesh, config.n_points, rng)
    accuracy, completeness = chamfer_components(points, ref_points, config.squared)

    noise, removed, masked = 0.0, 0, None
    if silhouettes is not None:
        inside, removed = visual_hull_filter(mesh, silhouettes, config.hull_dilation)
        noise = 100.0 * removed / mesh.n_faces
        if inside.n_faces:
            inside_points = sample_mesh_points(
                inside, config.n_points, np.random.default_rng(config.seed)
            )
            masked = chamfer_eval(inside_points, ref_points, config.squared)
        else:
            logger.warning("The hull filter removed every face; no masked CD.")

    return EvalReport(
        unmasked_cd=0.5 * (accuracy + completeness),
        noise_ratio=noise,
        masked_cd=masked,
        accuracy=accuracy,
        completeness=completeness,
        psnr=list(psnr),
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        n_faces_removed=removed,
        parameters={
            "n_points": config.n_points,
            "squared": config.squared,
            "hull_dilation": config.hull_dilation,
        },
        name=name,
    )
