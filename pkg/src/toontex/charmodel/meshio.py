"""Character interchange: Wavefront-style mesh text plus a JSON rig document.

Mesh file: ``v x y z`` / ``vt u v`` / ``f v/vt v/vt v/vt`` lines, 1-based
indices. Rig document: a JSON object with the fixed field names ``joints``,
``parents``, ``weights``, ``mean``, ``basis`` (plus optional ``names`` and
``joint_vertex_sets``). See the README for the byte-level layout.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError
from .model import BlendshapeBasis, CharacterMesh, Skeleton, SkinWeights


def save_character(mesh: CharacterMesh, obj_path, rig_path) -> None:
    lines = ["# toontex character mesh"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for uv in mesh.uvs:
        lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
    for tri, uvt in zip(mesh.triangles, mesh.uv_indices):
        lines.append("f " + " ".join(f"{tri[c] + 1}/{uvt[c] + 1}" for c in range(3)))
    Path(obj_path).write_text("\n".join(lines) + "\n", encoding="ascii")

    rig = {
        "joints": mesh.skeleton.joint_rest_positions.tolist(),
        "parents": mesh.skeleton.parents.tolist(),
        "names": list(mesh.skeleton.names),
        "weights": mesh.skin_weights.weights.tolist(),
        "mean": mesh.blendshapes.mean_shape.tolist(),
        "basis": mesh.blendshapes.basis.tolist(),
    }
    if mesh.joint_vertex_sets is not None:
        rig["joint_vertex_sets"] = [idx.tolist() for idx in mesh.joint_vertex_sets]
    Path(rig_path).write_text(json.dumps(rig, sort_keys=True), encoding="ascii")


def load_character(obj_path, rig_path) -> CharacterMesh:
    vertices, uvs, faces, uv_faces = [], [], [], []
    for lineno, line in enumerate(Path(obj_path).read_text(encoding="ascii").splitlines(), 1):
        parts = line.split()
        if not parts or parts[0] == "#":
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vt":
            uvs.append([float(x) for x in parts[1:3]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ContractError(f"{obj_path}:{lineno}: only triangles supported")
            vi, ti = [], []
            for corner in parts[1:]:
                fields = corner.split("/")
                if len(fields) < 2 or not fields[1]:
                    raise ContractError(f"{obj_path}:{lineno}: per-corner UV index required")
                vi.append(int(fields[0]) - 1)
                ti.append(int(fields[1]) - 1)
            faces.append(vi)
            uv_faces.append(ti)
        else:
            raise ContractError(f"{obj_path}:{lineno}: unsupported record {parts[0]!r}")

    rig = json.loads(Path(rig_path).read_text(encoding="ascii"))
    for key in ("joints", "parents", "weights", "mean", "basis"):
        if key not in rig:
            raise ContractError(f"{rig_path}: missing rig field {key!r}")
    jvs = rig.get("joint_vertex_sets")
    mean = np.array(rig["mean"], dtype=np.float64)
    basis = np.array(rig["basis"], dtype=np.float64)
    basis = basis.reshape(len(rig["basis"]), -1) if len(rig["basis"]) else \
        np.zeros((0, mean.size))
    return CharacterMesh(
        vertices=np.array(vertices, dtype=np.float64),
        triangles=np.array(faces, dtype=np.int64),
        uvs=np.array(uvs, dtype=np.float64),
        uv_indices=np.array(uv_faces, dtype=np.int64),
        skeleton=Skeleton(np.array(rig["joints"], dtype=np.float64),
                          np.array(rig["parents"], dtype=np.int64),
                          list(rig.get("names", []))),
        skin_weights=SkinWeights(np.array(rig["weights"], dtype=np.float64)),
        blendshapes=BlendshapeBasis(mean, basis),
        joint_vertex_sets=None if jvs is None else [np.array(i, dtype=np.int64) for i in jvs],
    )
