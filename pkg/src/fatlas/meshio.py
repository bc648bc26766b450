"""OFF and OBJ readers and writers for triangle (or higher) meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .simplex import SimplicialComplex


class MeshFormatError(ValueError):
    pass


def _oriented_faces(cx: SimplicialComplex):
    orient = cx.orientation or (1,) * len(cx)
    out = []
    for s, o in zip(cx.simplices, orient):
        s = list(s)
        if o < 0:
            s[0], s[1] = s[1], s[0]
        out.append(s)
    return out


def _export_geometry(cx: SimplicialComplex):
    """Vertex table (3 columns) and faces; periodic complexes are unwrapped per cell.

    Returns ``(vertices, faces, seam)`` where ``seam`` lists ``(copy, original)``
    pairs for vertices duplicated along the fundamental-domain seams.
    """
    faces = _oriented_faces(cx)
    if cx.cell_coords is None:
        v = cx.vertices
        if v.shape[1] < 3:
            v = np.hstack([v, np.zeros((len(v), 3 - v.shape[1]))])
        return v[:, :3], faces, []
    cells = cx.cells()
    verts, index, seam = [], {}, []
    out_faces = []
    for f, (s, face) in enumerate(zip(cx.simplices, faces)):
        row = []
        for v in face:
            p = cells[f, s.index(v)]
            key = (v, tuple(np.round(p, 9)))
            if key not in index:
                index[key] = len(verts)
                verts.append(p)
                if not np.allclose(p, cx.vertices[v]):
                    seam.append((index[key], v))
            row.append(index[key])
        out_faces.append(row)
    # the canonical copy of each vertex keeps its own index when present
    verts = np.asarray(verts)
    if verts.shape[1] < 3:
        verts = np.hstack([verts, np.zeros((len(verts), 3 - verts.shape[1]))])
    originals = {}
    for (v, _), i in index.items():
        if (i, v) not in seam:
            originals[v] = i
    seam = [(i, originals.get(v, -1)) for i, v in seam]
    return verts, out_faces, seam


def write_off(path, cx: SimplicialComplex) -> None:
    verts, faces, seam = _export_geometry(cx)
    lines = ["OFF"]
    for i, j in seam:
        lines.append(f"# seam_duplicate {i} {j}")
    lines.append(f"{len(verts)} {len(faces)} 0")
    lines += [" ".join(f"{x:.17g}" for x in p) for p in verts]
    lines += [f"{len(f)} " + " ".join(str(i) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def write_obj(path, cx: SimplicialComplex) -> None:
    verts, faces, seam = _export_geometry(cx)
    lines = [f"# seam_duplicate {i + 1} {j + 1}" for i, j in seam]
    lines += ["v " + " ".join(f"{x:.17g}" for x in p) for p in verts]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def _build(verts, faces) -> SimplicialComplex:
    if not faces:
        raise MeshFormatError("mesh has no faces")
    sizes = {len(f) for f in faces}
    if len(sizes) != 1:
        raise MeshFormatError("mixed face sizes")
    verts = np.asarray(verts, float)
    for f in faces:
        if min(f) < 0 or max(f) >= len(verts):
            raise MeshFormatError(f"face {f} references a missing vertex")
        if len(set(f)) != len(f):
            raise MeshFormatError(f"face {f} repeats a vertex")
    return SimplicialComplex.from_faces(verts, faces)


def read_off(path) -> SimplicialComplex:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    rows = list(_tokens(text))
    try:
        if not rows or not rows[0][0].endswith("OFF"):
            raise MeshFormatError("missing OFF header")
        head = rows[0][1:] or rows[1]
        start = 1 if rows[0][1:] else 2
        nv, nf = int(head[0]), int(head[1])
        verts = [[float(x) for x in r[:3]] for r in rows[start:start + nv]]
        faces = []
        for r in rows[start + nv:start + nv + nf]:
            k = int(r[0])
            faces.append([int(x) for x in r[1:1 + k]])
        if len(verts) != nv or len(faces) != nf or any(len(v) != 3 for v in verts):
            raise MeshFormatError("truncated OFF file")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"malformed OFF file: {exc}") from exc
    return _build(verts, faces)


def read_obj(path) -> SimplicialComplex:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc
    verts, faces = [], []
    try:
        for r in _tokens(text):
            if r[0] == "v":
                verts.append([float(x) for x in r[1:4]])
            elif r[0] == "f":
                idx = [int(t.split("/")[0]) for t in r[1:]]
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    except ValueError as exc:
        raise MeshFormatError(f"malformed OBJ file: {exc}") from exc
    return _build(verts, faces)


def read_mesh(path) -> SimplicialComplex:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    return read_off(path)
