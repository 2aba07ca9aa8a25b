"""OBJ and binary PLY mesh interchange."""
from __future__ import annotations

import numpy as np


class MeshIOError(ValueError):
    pass


def _fmt(x: float) -> str:
    # 9 significant digits round-trips float32 exactly
    return format(float(x), ".9g")


def write_obj(path, vertices: np.ndarray, faces: np.ndarray,
              normals: np.ndarray | None = None, uvs: np.ndarray | None = None,
              face_uvs: np.ndarray | None = None, mtllib: str | None = None,
              material: str | None = None):
    """Write v/vn/vt/f records. face_uvs gives per-corner vt indices (F, 3)."""
    lines = []
    if mtllib:
        lines.append(f"mtllib {mtllib}")
    if material:
        lines.append(f"usemtl {material}")
    for v in vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    if uvs is not None:
        for t in uvs:
            lines.append(f"vt {_fmt(t[0])} {_fmt(t[1])}")
    if normals is not None:
        for n in normals:
            lines.append(f"vn {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
    for i, f in enumerate(faces):
        if uvs is not None and face_uvs is not None:
            fu = face_uvs[i]
            if normals is not None:
                lines.append("f " + " ".join(f"{f[k] + 1}/{fu[k] + 1}/{f[k] + 1}" for k in range(3)))
            else:
                lines.append("f " + " ".join(f"{f[k] + 1}/{fu[k] + 1}" for k in range(3)))
        elif normals is not None:
            lines.append("f " + " ".join(f"{f[k] + 1}//{f[k] + 1}" for k in range(3)))
        else:
            lines.append("f " + " ".join(str(f[k] + 1) for k in range(3)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path):
    """Read v/vn/vt/f records. Returns dict with vertices, faces, normals,
    uvs, face_uvs (missing arrays are None). Faces must be triangles."""
    vertices, normals, uvs, faces, face_uvs = [], [], [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif tag == "f":
                if len(parts) != 4:
                    raise MeshIOError(f"non-triangle face with {len(parts) - 1} corners")
                vidx, tidx = [], []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    vidx.append(int(fields[0]) - 1)
                    if len(fields) > 1 and fields[1]:
                        tidx.append(int(fields[1]) - 1)
                faces.append(vidx)
                if tidx:
                    face_uvs.append(tidx)
    return {
        "vertices": np.array(vertices, dtype=np.float32).reshape(-1, 3),
        "faces": np.array(faces, dtype=np.int64).reshape(-1, 3),
        "normals": np.array(normals, dtype=np.float32).reshape(-1, 3) if normals else None,
        "uvs": np.array(uvs, dtype=np.float32).reshape(-1, 2) if uvs else None,
        "face_uvs": np.array(face_uvs, dtype=np.int64).reshape(-1, 3) if face_uvs else None,
    }


def write_ply(path, vertices: np.ndarray, faces: np.ndarray,
              normals: np.ndarray | None = None):
    """Binary little-endian PLY."""
    v = np.asarray(vertices, dtype="<f4")
    f = np.asarray(faces, dtype="<i4")
    props = ["property float x", "property float y", "property float z"]
    if normals is not None:
        props += ["property float nx", "property float ny", "property float nz"]
        v = np.concatenate([v, np.asarray(normals, dtype="<f4")], axis=1)
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {v.shape[0]}",
        *props,
        f"element face {f.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(v.tobytes())
        counts = np.full((f.shape[0], 1), 3, dtype="<u1")
        body = np.concatenate([counts, f.view("<u1").reshape(f.shape[0], -1)], axis=1)
        fh.write(body.tobytes())


def read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise MeshIOError("missing PLY header terminator")
    header = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]
    if "format binary_little_endian 1.0" not in header:
        raise MeshIOError("only binary little-endian PLY is supported")
    nvert = nface = 0
    vprops = []
    element = None
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                nvert = int(parts[2])
            elif element == "face":
                nface = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            vprops.append(parts[-1])
    stride = 4 * len(vprops)
    vdata = np.frombuffer(body[: nvert * stride], dtype="<f4").reshape(nvert, len(vprops))
    vertices = vdata[:, :3].astype(np.float32)
    normals = vdata[:, 3:6].astype(np.float32) if len(vprops) >= 6 else None
    fbody = body[nvert * stride:]
    faces = np.empty((nface, 3), dtype=np.int64)
    off = 0
    for i in range(nface):
        count = fbody[off]
        if count != 3:
            raise MeshIOError(f"non-triangle PLY face with {count} corners")
        faces[i] = np.frombuffer(fbody[off + 1: off + 13], dtype="<i4")
        off += 13
    return {"vertices": vertices, "faces": faces, "normals": normals}
