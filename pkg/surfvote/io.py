"""Readers and writers for images, cameras, meshes, point clouds and CSV logs.

All formats are documented in ``docs/src/formats.rst``.
"""
import csv
import logging
import os
import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)


# Images ###############################################################################


def to_uint8(image) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    if image.dtype == bool:
        return image.astype(np.uint8) * 255
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, image) -> None:
    """Write an 8-bit PNG from a float image in [0, 1], a uint8 image or a
    boolean mask (written as 0/255)."""
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read a PNG as floats in [0, 1] (RGB images have shape (h, w, 3))."""
    with Image.open(path) as image:
        array = np.asarray(image)
    if array.ndim == 3 and array.shape[2] == 4:
        array = array[..., :3]
    return array.astype(np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    """Read a 0/255 PNG mask as booleans."""
    with Image.open(path) as image:
        array = np.asarray(image.convert("L"))
    return array >= 128


def write_pfm(path, image) -> None:
    """Write a float32 PFM, little-endian, rows stored bottom to top."""
    image = np.asarray(image, dtype="<f4")
    if image.ndim == 3 and image.shape[2] == 3:
        kind = b"PF"
    elif image.ndim == 2:
        kind = b"Pf"
    else:
        raise ValueError(
            "PFM holds (h, w) or (h, w, 3) images. Got {}.".format(image.shape)
        )
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(kind + b"\n")
        f.write("{} {}\n".format(width, height).encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(image[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise ValueError("{} is not a PFM file.".format(path))
        width, height = [int(v) for v in f.readline().split()]
        scale = float(f.readline().strip())
        data = f.read()
    dtype = "<f4" if scale < 0 else ">f4"
    channels = 3 if kind == b"PF" else 1
    expected = width * height * channels
    array = np.frombuffer(data, dtype=dtype, count=expected)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return array.reshape(shape)[::-1].astype(np.float32)


# Cameras ##############################################################################

_CAMERA_HEADER = "# index width height fx fy cx cy m00 m01 ... m33 (world-from-camera)"


def write_cameras(path, cameras: Sequence) -> None:
    """One line per view: ``index width height fx fy cx cy`` followed by the 16
    entries of the world-from-camera matrix, row-major."""
    with open(path, "w") as f:
        f.write(_CAMERA_HEADER + "\n")
        for index, camera in enumerate(cameras):
            values = [camera.fx, camera.fy, camera.cx, camera.cy] + list(
                camera.pose.ravel()
            )
            f.write(
                "{} {} {} {}\n".format(
                    index,
                    camera.width,
                    camera.height,
                    " ".join("%.17g" % v for v in values),
                )
            )


def read_cameras(path) -> List:
    from surfvote.renderer import Camera

    cameras = []
    with open(path) as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 23:
                raise ValueError(
                    "{}:{}: expected 23 fields, got {}.".format(
                        path, line_number, len(parts)
                    )
                )
            width, height = int(parts[1]), int(parts[2])
            fx, fy, cx, cy = [float(v) for v in parts[3:7]]
            pose = np.array([float(v) for v in parts[7:]]).reshape(4, 4)
            cameras.append(Camera(width, height, fx, fy, cx, cy, pose))
    return cameras


# Meshes and point clouds ##############################################################


def write_ply(
    path,
    vertices,
    faces=None,
    colors=None,
    normals=None,
    binary: bool = True,
) -> None:
    """Write a PLY file: double vertex coordinates (and normals), optional uchar
    colors, and faces as ``list uchar int`` (binary little-endian or ASCII)."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.zeros((0, 3), dtype=np.int64) if faces is None else np.asarray(faces)
    header = [
        "ply",
        "format {} 1.0".format("binary_little_endian" if binary else "ascii"),
        "comment written by surfvote",
        "element vertex {}".format(len(vertices)),
        "property double x",
        "property double y",
        "property double z",
    ]
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    columns = [vertices]
    if normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
        fields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
        columns.append(np.asarray(normals, dtype=np.float64))
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        columns.append(to_uint8(colors))
    header += [
        "element face {}".format(len(faces)),
        "property list uchar int vertex_indices",
        "end_header",
    ]

    vertex_data = np.empty(len(vertices), dtype=fields)
    names = [name for name, _ in fields]
    flat = np.concatenate([c.astype(np.float64) for c in columns], axis=1)
    for i, name in enumerate(names):
        vertex_data[name] = flat[:, i]
    face_data = np.empty(len(faces), dtype=[("n", "u1"), ("v", "<i4", (3,))])
    face_data["n"] = 3
    face_data["v"] = faces

    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(vertex_data.tobytes())
            f.write(face_data.tobytes())
            return
        for row in vertex_data:
            f.write(
                " ".join(
                    ("%.17g" % row[name]) if fields[i][1] == "<f8" else str(row[name])
                    for i, name in enumerate(names)
                ).encode("ascii")
                + b"\n"
            )
        for face in faces:
            f.write("3 {} {} {}\n".format(*face).encode("ascii"))


_PLY_TYPES = {
    "char": "i1",
    "uchar": "u1",
    "short": "<i2",
    "ushort": "<u2",
    "int": "<i4",
    "uint": "<u4",
    "float": "<f4",
    "double": "<f8",
}


def read_ply(path) -> Dict[str, Optional[np.ndarray]]:
    """Read a PLY written by :func:`write_ply` (triangle faces). Returns a dict with
    ``vertices``, ``faces`` and, when present, ``colors`` (floats in [0, 1]) and
    ``normals``."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError("{} is not a PLY file.".format(path))
        fmt = None
        elements = []  # type: List[Tuple[str, int, List[Tuple[str, str]]]]
        while True:
            line = f.readline()
            if not line:
                raise ValueError("{}: unexpected end of header.".format(path))
            words = line.decode("ascii").split()
            if not words or words[0] == "comment":
                continue
            if words[0] == "end_header":
                break
            if words[0] == "format":
                fmt = words[1]
            elif words[0] == "element":
                elements.append((words[1], int(words[2]), []))
            elif words[0] == "property":
                if words[1] == "list":
                    elements[-1][2].append((words[-1], "list"))
                else:
                    elements[-1][2].append((words[2], _PLY_TYPES[words[1]]))
        body = f.read()

    result = {"vertices": None, "faces": None, "colors": None, "normals": None}
    if fmt == "ascii":
        tokens = iter(body.split())
        for name, count, properties in elements:
            rows = []
            for _ in range(count):
                if name == "face":
                    n = int(next(tokens))
                    rows.append([int(next(tokens)) for _ in range(n)])
                else:
                    rows.append([float(next(tokens)) for _ in properties])
            _store_element(result, name, properties, rows)
    elif fmt == "binary_little_endian":
        offset = 0
        for name, count, properties in elements:
            if name == "face":
                dtype = np.dtype([("n", "u1"), ("v", "<i4", (3,))])
                data = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
                offset += dtype.itemsize * count
                _store_element(result, name, properties, data["v"])
            else:
                dtype = np.dtype(properties)
                data = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
                offset += dtype.itemsize * count
                rows = np.stack([data[p].astype(np.float64) for p, _ in properties], -1)
                _store_element(result, name, properties, rows.reshape(count, -1))
    else:
        raise ValueError("{}: unsupported PLY format {}.".format(path, fmt))
    return result


def _store_element(result, name, properties, rows) -> None:
    if name == "face":
        result["faces"] = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        return
    rows = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
    names = [p for p, _ in properties]
    result["vertices"] = rows[:, [names.index(a) for a in "xyz"]]
    if "nx" in names:
        result["normals"] = rows[:, [names.index(a) for a in ("nx", "ny", "nz")]]
    if "red" in names:
        rgb = [names.index(a) for a in ("red", "green", "blue")]
        result["colors"] = rows[:, rgb] / 255.0
    if result["faces"] is None:
        result["faces"] = np.zeros((0, 3), dtype=np.int64)


def write_obj(path, vertices, faces, colors=None) -> None:
    """Wavefront OBJ with ``%.17g`` coordinates (``v x y z [r g b]``) and 1-based
    triangle indices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    with open(path, "w") as f:
        f.write("# written by surfvote\n")
        for i, vertex in enumerate(vertices):
            values = list(vertex) + ([] if colors is None else list(colors[i]))
            f.write("v " + " ".join("%.17g" % v for v in values) + "\n")
        for face in np.asarray(faces, dtype=np.int64):
            f.write("f {} {} {}\n".format(*(face + 1)))


def read_obj(path) -> Dict[str, Optional[np.ndarray]]:
    vertices, colors, faces = [], [], []
    with open(path) as f:
        for line in f:
            words = line.split()
            if not words:
                continue
            if words[0] == "v":
                values = [float(v) for v in words[1:]]
                vertices.append(values[:3])
                if len(values) == 6:
                    colors.append(values[3:])
            elif words[0] == "f":
                faces.append([int(re.split("/", w)[0]) - 1 for w in words[1:4]])
    return {
        "vertices": np.array(vertices, dtype=np.float64).reshape(-1, 3),
        "faces": np.array(faces, dtype=np.int64).reshape(-1, 3),
        "colors": np.array(colors) if colors else None,
        "normals": None,
    }


def write_points(path, points, binary: bool = True) -> None:
    """Write a point cloud as a PLY without faces."""
    write_ply(path, points, binary=binary)


def read_points(path) -> np.ndarray:
    """Read a point cloud from a PLY or from a whitespace separated text file with
    three columns."""
    if str(path).lower().endswith(".ply"):
        return read_ply(path)["vertices"]
    return np.loadtxt(path, ndmin=2)[:, :3]


# CSV ##################################################################################


class CsvLog:
    """Append-only CSV file with a fixed header. An existing file is continued
    (its header must match)."""

    def __init__(self, path, fieldnames: Sequence[str]):
        self.path = path
        self.fieldnames = list(fieldnames)
        if os.path.exists(path) and os.path.getsize(path) > 0:
            with open(path, newline="") as f:
                header = next(csv.reader(f))
            if header != self.fieldnames:
                raise ValueError(
                    "{} has header {}, expected {}.".format(
                        path, header, self.fieldnames
                    )
                )
        else:
            with open(path, "w", newline="") as f:
                csv.writer(f).writerow(self.fieldnames)

    def append(self, rows: Iterable[Dict]) -> None:
        with open(self.path, "a", newline="") as f:
            writer = csv.DictWriter(
                f, fieldnames=self.fieldnames, extrasaction="ignore"
            )
            for row in rows:
                writer.writerow({k: _format_cell(row.get(k)) for k in self.fieldnames})


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "%.10g" % value
    return value


def write_csv(path, rows: Sequence[Dict], fieldnames: Sequence[str]) -> None:
    if os.path.exists(path):
        os.remove(path)
    CsvLog(path, fieldnames).append(rows)


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
