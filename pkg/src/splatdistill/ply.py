"""Reader/writer for the splat PLY layout used by common 3DGS tools.

Only the ``vertex`` element is interpreted. Required float properties are
``x y z f_dc_0..2 opacity scale_0..2 rot_0..3``; ``f_rest_*`` carry higher SH
bands (channel-major, as in the reference 3DGS exporter). Values are stored
pre-activation: opacity as a logit, scales as logs.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from .scene import GaussianScene, SceneError

log = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_REQUIRED = (
    ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


class PlyError(SceneError):
    pass


def _parse_header(fh):
    magic = fh.readline().strip()
    if magic != b"ply":
        raise PlyError("header: missing 'ply' magic line")
    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    while True:
        raw = fh.readline()
        if not raw:
            raise PlyError("header: reached end of file before 'end_header'")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith(("comment", "obj_info")):
            continue
        parts = line.split()
        if parts[0] == "end_header":
            break
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"header: unsupported format line {line!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise PlyError(f"header: malformed element line {line!r}")
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyError(f"header: property before any element: {line!r}")
            if parts[1] == "list":
                raise PlyError(f"header: list property not supported in element {elements[-1][0]!r}")
            if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise PlyError(f"header: malformed property line {line!r}")
            elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise PlyError(f"header: unknown keyword in {line!r}")
    if fmt is None:
        raise PlyError("header: missing format line")
    return fmt, elements


def load_pointcloud(path: str | os.PathLike) -> GaussianScene:
    with open(path, "rb") as fh:
        fmt, elements = _parse_header(fh)
        body = fh.read()

    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise PlyError("element 'vertex' missing")
    if names.index("vertex") != 0:
        # Elements before vertex would have to be skipped byte-accurately; not supported.
        raise PlyError("element 'vertex' must be the first element")
    _, count, props = elements[0]
    if count == 0:
        raise PlyError("vertex: empty scene")
    prop_names = [p[0] for p in props]
    missing = [p for p in _REQUIRED if p not in prop_names]
    if missing:
        raise PlyError(f"vertex: missing required properties {missing}")

    dtype = np.dtype([(name, "<" + t) for name, t in props])
    if fmt == "binary_little_endian":
        need = dtype.itemsize * count
        if len(body) < need:
            raise PlyError(f"vertex: truncated payload ({len(body)} of {need} bytes)")
        data = np.frombuffer(body, dtype=dtype, count=count)
    else:
        rows = body.decode("ascii", errors="replace").split("\n")
        rows = [r for r in rows if r.strip()]
        if len(rows) < count:
            raise PlyError(f"vertex: truncated payload ({len(rows)} of {count} rows)")
        data = np.zeros(count, dtype=dtype)
        for i, row in enumerate(rows[:count]):
            vals = row.split()
            if len(vals) != len(props):
                raise PlyError(f"vertex {i}: expected {len(props)} values, got {len(vals)}")
            try:
                data[i] = tuple(float(v) for v in vals)
            except ValueError as exc:
                raise PlyError(f"vertex {i}: non-numeric value ({exc})") from None

    rest = sorted((p for p in prop_names if p.startswith("f_rest_")), key=lambda s: int(s[7:]))
    known = set(_REQUIRED) | set(rest)
    unknown = [p for p in prop_names if p not in known]
    if unknown:
        log.warning("ignoring unknown vertex properties: %s", ", ".join(unknown))
    n_rest = len(rest)
    if n_rest % 3:
        raise PlyError(f"vertex: f_rest count {n_rest} is not a multiple of 3")
    k = n_rest // 3 + 1
    order = {1: 0, 4: 1, 9: 2, 16: 3}.get(k)
    if order is None:
        raise PlyError(f"vertex: f_rest count {n_rest} does not match an SH order <= 3")

    col = lambda name: np.asarray(data[name], dtype=np.float64)  # noqa: E731
    sh = np.zeros((count, k, 3))
    for c in range(3):
        sh[:, 0, c] = col(f"f_dc_{c}")
        for j in range(1, k):
            sh[:, j, c] = col(f"f_rest_{c * (k - 1) + j - 1}")
    return GaussianScene(
        mu=np.stack([col("x"), col("y"), col("z")], axis=1),
        log_scale=np.stack([col(f"scale_{i}") for i in range(3)], axis=1),
        rotation=np.stack([col(f"rot_{i}") for i in range(4)], axis=1),
        sh=sh,
        opacity_logit=col("opacity"),
        sh_order=order,
    )


def save_pointcloud(scene: GaussianScene, path: str | os.PathLike, *, ascii: bool = False) -> None:
    n = len(scene)
    k = scene.sh.shape[1]
    names = ["x", "y", "z"] + [f"f_dc_{c}" for c in range(3)]
    names += [f"f_rest_{i}" for i in range(3 * (k - 1))]
    names += ["opacity"] + [f"scale_{i}" for i in range(3)] + [f"rot_{i}" for i in range(4)]

    cols = [scene.mu[:, 0], scene.mu[:, 1], scene.mu[:, 2]]
    cols += [scene.sh[:, 0, c] for c in range(3)]
    cols += [scene.sh[:, j, c] for c in range(3) for j in range(1, k)]
    cols += [scene.opacity_logit] + [scene.log_scale[:, i] for i in range(3)]
    cols += [scene.rotation[:, i] for i in range(4)]
    table = np.stack(cols, axis=1).astype("<f4")

    header = ["ply", f"format {'ascii' if ascii else 'binary_little_endian'} 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if ascii:
            for row in table:
                fh.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))
        else:
            fh.write(table.tobytes())
