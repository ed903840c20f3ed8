"""ASCII point-cloud readers and writers: PLY, PCD v0.7, and XYZ.

Binary encodings are rejected; coordinates are written with 17 significant
digits so float64 values survive a round trip exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud
from .errors import InvalidParameter, ParseError, UnsupportedFormat

FORMATS = ("ply", "pcd", "xyz")

_FLOAT_PLY_TYPES = {"float", "float32", "double", "float64"}
_UCHAR_PLY_TYPES = {"uchar", "uint8"}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _to_text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnsupportedFormat("not valid UTF-8 text; binary encodings are unsupported") from exc
    return data


def _parse_floats(tokens: list[str], line_no: int) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"invalid numeric token: {exc}", line_no) from None
    for v in values:
        if not np.isfinite(v):
            raise ParseError("non-finite coordinate", line_no)
    return values


def parse_cloud(data: bytes | str, fmt: str) -> PointCloud:
    """Parse a cloud from file contents in the given format (ply, pcd, xyz)."""
    fmt = fmt.lower()
    if fmt == "ply":
        return _parse_ply(_to_text(data))
    if fmt == "pcd":
        return _parse_pcd(_to_text(data))
    if fmt == "xyz":
        return _parse_xyz(_to_text(data))
    raise UnsupportedFormat(f"unknown format '{fmt}'")


def write_cloud(cloud: PointCloud, fmt: str) -> bytes:
    """Serialize a cloud to file contents in the given format."""
    fmt = fmt.lower()
    if fmt == "ply":
        return _write_ply(cloud)
    if fmt == "pcd":
        return _write_pcd(cloud)
    if fmt == "xyz":
        return _write_xyz(cloud)
    raise UnsupportedFormat(f"unknown format '{fmt}'")


def read_cloud(path: str | os.PathLike) -> PointCloud:
    """Read a cloud, inferring the format from the file extension."""
    ext = os.path.splitext(str(path))[1].lstrip(".").lower()
    if ext not in FORMATS:
        raise UnsupportedFormat(f"cannot infer format from extension '.{ext}'")
    with open(path, "rb") as fh:
        return parse_cloud(fh.read(), ext)


def save_cloud(cloud: PointCloud, path: str | os.PathLike) -> None:
    ext = os.path.splitext(str(path))[1].lstrip(".").lower()
    if ext not in FORMATS:
        raise UnsupportedFormat(f"cannot infer format from extension '.{ext}'")
    with open(path, "wb") as fh:
        fh.write(write_cloud(cloud, ext))


# PLY ------------------------------------------------------------------------

def _parse_ply(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)

    vertex_count = None
    properties: list[str] = []
    in_vertex_element = False
    header_end = None
    for i, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] == "comment":
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError(f"unsupported ply format '{' '.join(tokens[1:])}'", i)
        elif key == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element declaration", i)
            if tokens[1] == "vertex":
                try:
                    vertex_count = int(tokens[2])
                except ValueError:
                    raise ParseError("vertex count is not an integer", i) from None
                in_vertex_element = True
            else:
                if int(tokens[2]) != 0:
                    raise ParseError(f"unsupported non-empty element '{tokens[1]}'", i)
                in_vertex_element = False
        elif key == "property":
            if not in_vertex_element:
                continue
            if len(tokens) != 3:
                raise ParseError("malformed property declaration", i)
            ptype, pname = tokens[1], tokens[2]
            if pname in ("x", "y", "z", "nx", "ny", "nz") and ptype not in _FLOAT_PLY_TYPES:
                raise ParseError(f"property '{pname}' must be a float type", i)
            if pname in ("red", "green", "blue") and ptype not in _UCHAR_PLY_TYPES:
                raise ParseError(f"property '{pname}' must be uchar", i)
            properties.append(pname)
        elif key == "end_header":
            header_end = i
            break
        else:
            raise ParseError(f"unknown header keyword '{key}'", i)

    if header_end is None:
        raise ParseError("missing end_header", len(lines))
    if vertex_count is None:
        raise ParseError("missing 'element vertex' declaration", header_end)
    for required in ("x", "y", "z"):
        if required not in properties:
            raise ParseError(f"vertex element lacks property '{required}'", header_end)

    has_normals = all(p in properties for p in ("nx", "ny", "nz"))
    has_colors = all(p in properties for p in ("red", "green", "blue"))
    col = {name: properties.index(name) for name in properties}

    body = lines[header_end:]
    if len(body) < vertex_count:
        raise ParseError(
            f"expected {vertex_count} vertex records, found {len(body)}", len(lines)
        )

    positions = np.zeros((vertex_count, 3))
    normals = np.zeros((vertex_count, 3)) if has_normals else None
    colors = np.zeros((vertex_count, 3), dtype=np.uint8) if has_colors else None
    for r in range(vertex_count):
        line_no = header_end + 1 + r
        tokens = body[r].split()
        if len(tokens) != len(properties):
            raise ParseError(
                f"expected {len(properties)} values, found {len(tokens)}", line_no
            )
        values = _parse_floats(tokens, line_no)
        positions[r] = (values[col["x"]], values[col["y"]], values[col["z"]])
        if has_normals:
            normals[r] = (values[col["nx"]], values[col["ny"]], values[col["nz"]])
        if has_colors:
            rgb = (values[col["red"]], values[col["green"]], values[col["blue"]])
            if min(rgb) < 0 or max(rgb) > 255:
                raise ParseError("color outside [0, 255]", line_no)
            colors[r] = rgb

    return PointCloud(positions, normals=normals, colors=colors)


def _write_ply(cloud: PointCloud) -> bytes:
    out = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    out += [f"property double {axis}" for axis in ("x", "y", "z")]
    if cloud.has_normals:
        out += [f"property double {axis}" for axis in ("nx", "ny", "nz")]
    if cloud.colors is not None:
        out += [f"property uchar {c}" for c in ("red", "green", "blue")]
    out.append("end_header")
    for i in range(len(cloud)):
        fields = [_fmt(v) for v in cloud.positions[i]]
        if cloud.has_normals:
            fields += [_fmt(v) for v in cloud.normals[i]]
        if cloud.colors is not None:
            fields += [str(int(v)) for v in cloud.colors[i]]
        out.append(" ".join(fields))
    return ("\n".join(out) + "\n").encode("utf-8")


# PCD ------------------------------------------------------------------------

def _parse_pcd(text: str) -> PointCloud:
    lines = text.splitlines()
    header: dict[str, list[str]] = {}
    data_line = None
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        key = tokens[0].upper()
        header[key] = tokens[1:]
        if key == "DATA":
            data_line = i
            break
    if data_line is None:
        raise ParseError("missing DATA line", len(lines))
    encoding = header["DATA"][0] if header["DATA"] else ""
    if encoding != "ascii":
        raise UnsupportedFormat(f"PCD data encoding '{encoding}' is unsupported")
    if "FIELDS" not in header:
        raise ParseError("missing FIELDS line", data_line)
    fields = header["FIELDS"]
    if fields[:3] != ["x", "y", "z"]:
        raise ParseError("FIELDS must start with x y z", data_line)
    has_normals = fields[3:6] == ["normal_x", "normal_y", "normal_z"]
    if len(fields) > 3 and not has_normals:
        raise ParseError(f"unsupported FIELDS layout: {' '.join(fields)}", data_line)
    if "POINTS" not in header:
        raise ParseError("missing POINTS line", data_line)
    try:
        count = int(header["POINTS"][0])
    except (IndexError, ValueError):
        raise ParseError("malformed POINTS line", data_line) from None

    body = lines[data_line:]
    records = [ln for ln in body if ln.strip()]
    if len(records) < count:
        raise ParseError(f"expected {count} records, found {len(records)}", len(lines))

    positions = np.zeros((count, 3))
    normals = np.zeros((count, 3)) if has_normals else None
    for r in range(count):
        line_no = data_line + 1 + r
        tokens = records[r].split()
        if len(tokens) != len(fields):
            raise ParseError(f"expected {len(fields)} values, found {len(tokens)}", line_no)
        values = _parse_floats(tokens, line_no)
        positions[r] = values[:3]
        if has_normals:
            normals[r] = values[3:6]
    return PointCloud(positions, normals=normals)


def _write_pcd(cloud: PointCloud) -> bytes:
    fields = ["x", "y", "z"]
    if cloud.has_normals:
        fields += ["normal_x", "normal_y", "normal_z"]
    n_fields = len(fields)
    out = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        "FIELDS " + " ".join(fields),
        "SIZE " + " ".join(["8"] * n_fields),
        "TYPE " + " ".join(["F"] * n_fields),
        "COUNT " + " ".join(["1"] * n_fields),
        f"WIDTH {len(cloud)}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {len(cloud)}",
        "DATA ascii",
    ]
    for i in range(len(cloud)):
        values = [_fmt(v) for v in cloud.positions[i]]
        if cloud.has_normals:
            values += [_fmt(v) for v in cloud.normals[i]]
        out.append(" ".join(values))
    return ("\n".join(out) + "\n").encode("utf-8")


# XYZ ------------------------------------------------------------------------

def _parse_xyz(text: str) -> PointCloud:
    rows = []
    for i, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 3:
            raise ParseError(f"expected 3 values, found {len(tokens)}", i)
        rows.append(_parse_floats(tokens, i))
    return PointCloud(np.asarray(rows, dtype=np.float64).reshape(-1, 3))


def _write_xyz(cloud: PointCloud) -> bytes:
    out = [" ".join(_fmt(v) for v in row) for row in cloud.positions]
    return ("\n".join(out) + ("\n" if out else "")).encode("utf-8")


def infer_format(path: str | os.PathLike) -> str:
    ext = os.path.splitext(str(path))[1].lstrip(".").lower()
    if ext not in FORMATS:
        raise InvalidParameter(f"unsupported cloud extension '.{ext}'")
    return ext
