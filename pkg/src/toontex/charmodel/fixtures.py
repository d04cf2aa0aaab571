"""Procedural character fixtures.

Every fixture shares one atlas layout: each body part owns a rectangle of
the unit UV square, and the part's chart fills its rectangle exactly, so
region masks derived from ATLAS_REGIONS partition the chart mask.

Tubes are unwrapped to their rectangle with a single generator seam (the
first and last UV columns reference the same 3D vertex column); the head
sphere has a meridian seam plus pole fans.
"""

from __future__ import annotations

import numpy as np

from .model import BlendshapeBasis, CharacterMesh, Skeleton, SkinWeights

SPECIES = (
    "human", "bear", "mouse", "cat", "tiger", "dog", "rabbit", "monkey",
    "elephant", "fox", "pig", "deer", "hippo", "cattle", "sheep",
)

# region name -> list of (u0, v0, u1, v1) rectangles in the unit square
ATLAS_REGIONS: dict[str, list[tuple[float, float, float, float]]] = {
    "head": [(0.03, 0.53, 0.47, 0.97)],
    "torso": [(0.53, 0.53, 0.97, 0.97)],
    "left_arm": [(0.03, 0.28, 0.22, 0.47)],
    "right_arm": [(0.28, 0.28, 0.47, 0.47)],
    "left_leg": [(0.53, 0.28, 0.72, 0.47)],
    "right_leg": [(0.78, 0.28, 0.97, 0.47)],
    "feet": [(0.03, 0.03, 0.22, 0.22), (0.28, 0.03, 0.47, 0.22)],
    "eyes": [(0.53, 0.03, 0.66, 0.16), (0.72, 0.03, 0.85, 0.16)],
}

JOINT_NAMES = [
    "pelvis", "spine1", "spine2", "spine3", "chest", "neck", "head",
    "clavicle_l", "shoulder_l", "elbow_l", "wrist_l",
    "clavicle_r", "shoulder_r", "elbow_r", "wrist_r",
    "hip_l", "knee_l", "ankle_l", "toe_l",
    "hip_r", "knee_r", "ankle_r", "toe_r",
]

JOINT_PARENTS = [-1, 0, 1, 2, 3, 4, 5,
                 4, 7, 8, 9,
                 4, 11, 12, 13,
                 0, 15, 16, 17,
                 0, 19, 20, 21]

# per-species proportion tweaks applied to the shared body plan
_SPECIES_SHAPE = {
    "human": (1.00, 1.00), "bear": (1.08, 1.12), "mouse": (1.10, 0.92),
    "cat": (1.02, 0.95), "tiger": (1.06, 1.05), "dog": (1.03, 1.00),
    "rabbit": (1.05, 0.93), "monkey": (1.00, 0.96), "elephant": (1.15, 1.12),
    "fox": (1.02, 0.94), "pig": (1.08, 1.08), "deer": (1.00, 0.97),
    "hippo": (1.12, 1.15), "cattle": (1.05, 1.08), "sheep": (1.04, 1.02),
}


class _MeshBuilder:
    def __init__(self):
        self.vertices: list[np.ndarray] = []
        self.uvs: list[tuple[float, float]] = []
        self.triangles: list[tuple[int, int, int]] = []
        self.uv_indices: list[tuple[int, int, int]] = []
        self.part_of: list[str] = []

    def add_vertex(self, pos, part: str) -> int:
        self.vertices.append(np.asarray(pos, dtype=np.float64))
        self.part_of.append(part)
        return len(self.vertices) - 1

    def add_uv(self, u: float, v: float) -> int:
        self.uvs.append((u, v))
        return len(self.uvs) - 1

    def add_face(self, verts, uvs):
        self.triangles.append(tuple(verts))
        self.uv_indices.append(tuple(uvs))


def _frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def _add_tube(b: _MeshBuilder, part: str, rect, p0, p1, radius, n_around, n_rows,
              phase: float = 0.0, taper: float = 1.0):
    """Open tube from p0 to p1; UV chart fills rect with a seam column."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    e1, e2 = _frame(p1 - p0)
    u0, v0, u1, v1 = rect
    vidx = np.empty((n_rows + 1, n_around), dtype=int)
    uvidx = np.empty((n_rows + 1, n_around + 1), dtype=int)
    for row in range(n_rows + 1):
        t = row / n_rows
        center = p0 + (p1 - p0) * t
        r = radius * (1.0 + (taper - 1.0) * t)
        for a in range(n_around):
            ang = phase + 2.0 * np.pi * a / n_around
            vidx[row, a] = b.add_vertex(center + r * (np.cos(ang) * e1 + np.sin(ang) * e2), part)
        for a in range(n_around + 1):
            uvidx[row, a] = b.add_uv(u0 + (u1 - u0) * a / n_around,
                                     v0 + (v1 - v0) * row / n_rows)
    for row in range(n_rows):
        for a in range(n_around):
            a2 = (a + 1) % n_around
            q = [vidx[row, a], vidx[row, a2], vidx[row + 1, a2], vidx[row + 1, a]]
            t = [uvidx[row, a], uvidx[row, a + 1], uvidx[row + 1, a + 1], uvidx[row + 1, a]]
            b.add_face((q[0], q[1], q[2]), (t[0], t[1], t[2]))
            b.add_face((q[0], q[2], q[3]), (t[0], t[2], t[3]))


def _add_sphere(b: _MeshBuilder, part: str, rect, center, radius, n_lon, n_lat,
                y_scale: float = 1.0):
    """Lat-long sphere; UV chart fills rect, poles fan out along the v edges."""
    center = np.asarray(center, dtype=np.float64)
    u0, v0, u1, v1 = rect
    south = b.add_vertex(center + np.array([0.0, -radius * y_scale, 0.0]), part)
    north = b.add_vertex(center + np.array([0.0, radius * y_scale, 0.0]), part)
    ring = np.empty((n_lat - 1, n_lon), dtype=int)
    ring_uv = np.empty((n_lat - 1, n_lon + 1), dtype=int)
    for i in range(1, n_lat):
        polar = np.pi * i / n_lat
        y = -np.cos(polar) * radius * y_scale
        r = np.sin(polar) * radius
        for a in range(n_lon):
            ang = np.pi + 2.0 * np.pi * a / n_lon  # seam faces -z
            pos = center + np.array([r * np.sin(ang), y, r * np.cos(ang)])
            ring[i - 1, a] = b.add_vertex(pos, part)
        for a in range(n_lon + 1):
            ring_uv[i - 1, a] = b.add_uv(u0 + (u1 - u0) * a / n_lon,
                                         v0 + (v1 - v0) * i / n_lat)
    for a in range(n_lon):
        mid_u = u0 + (u1 - u0) * (a + 0.5) / n_lon
        uv_s = b.add_uv(mid_u, v0)
        uv_n = b.add_uv(mid_u, v1)
        a2 = (a + 1) % n_lon
        b.add_face((south, ring[0, a2], ring[0, a]),
                   (uv_s, ring_uv[0, a + 1], ring_uv[0, a]))
        b.add_face((north, ring[-1, a], ring[-1, a2]),
                   (uv_n, ring_uv[-1, a], ring_uv[-1, a + 1]))
    for i in range(n_lat - 2):
        for a in range(n_lon):
            a2 = (a + 1) % n_lon
            q = [ring[i, a], ring[i, a2], ring[i + 1, a2], ring[i + 1, a]]
            t = [ring_uv[i, a], ring_uv[i, a + 1], ring_uv[i + 1, a + 1], ring_uv[i + 1, a]]
            b.add_face((q[0], q[1], q[2]), (t[0], t[1], t[2]))
            b.add_face((q[0], q[2], q[3]), (t[0], t[2], t[3]))


def _add_quad(b: _MeshBuilder, part: str, rect, center, right, up):
    center = np.asarray(center, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    u0, v0, u1, v1 = rect
    corners = [center - right - up, center + right - up, center + right + up, center - right + up]
    uvc = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
    vid = [b.add_vertex(c, part) for c in corners]
    tid = [b.add_uv(u, v) for u, v in uvc]
    b.add_face((vid[0], vid[1], vid[2]), (tid[0], tid[1], tid[2]))
    b.add_face((vid[0], vid[2], vid[3]), (tid[0], tid[2], tid[3]))


def _chain_weights(vertices: np.ndarray, joints: np.ndarray, chain: list[int],
                   num_joints: int, axis_points: np.ndarray) -> np.ndarray:
    """Piecewise-linear weights along an ordered joint chain.

    axis_points gives, per chain joint, its scalar station along the part;
    vertices are stationed by projection on the chain's overall direction.
    """
    w = np.zeros((len(vertices), num_joints))
    if len(chain) == 1:
        w[:, chain[0]] = 1.0
        return w
    direction = axis_points[-1] - axis_points[0]
    direction = direction / np.dot(direction, direction)
    stations = (axis_points - axis_points[0]) @ direction
    s = (vertices - axis_points[0]) @ direction
    s = np.clip(s, stations[0], stations[-1])
    for i in range(len(chain) - 1):
        lo, hi = stations[i], stations[i + 1]
        mask = (s >= lo) & (s <= hi)
        if hi > lo:
            t = (s[mask] - lo) / (hi - lo)
        else:
            t = np.zeros(np.count_nonzero(mask))
        w[mask, chain[i]] += 1.0 - t
        w[mask, chain[i + 1]] += t
    return w


def _skeleton_joints(head_scale: float, body_scale: float) -> np.ndarray:
    s = body_scale
    j = {
        "pelvis": (0, 0.00, 0), "spine1": (0, 0.06, 0), "spine2": (0, 0.12, 0),
        "spine3": (0, 0.18, 0), "chest": (0, 0.24, 0), "neck": (0, 0.29, 0),
        "head": (0, 0.35, 0),
        "clavicle_l": (0.05 * s, 0.25, 0), "shoulder_l": (0.15 * s, 0.24, 0),
        "elbow_l": (0.17 * s, 0.12, 0), "wrist_l": (0.18 * s, 0.01, 0),
        "clavicle_r": (-0.05 * s, 0.25, 0), "shoulder_r": (-0.15 * s, 0.24, 0),
        "elbow_r": (-0.17 * s, 0.12, 0), "wrist_r": (-0.18 * s, 0.01, 0),
        "hip_l": (0.065 * s, -0.02, 0), "knee_l": (0.065 * s, -0.20, 0),
        "ankle_l": (0.065 * s, -0.37, 0), "toe_l": (0.065 * s, -0.41, 0.07),
        "hip_r": (-0.065 * s, -0.02, 0), "knee_r": (-0.065 * s, -0.20, 0),
        "ankle_r": (-0.065 * s, -0.37, 0), "toe_r": (-0.065 * s, -0.41, 0.07),
    }
    return np.array([j[name] for name in JOINT_NAMES], dtype=np.float64)


def _blendshape_basis(vertices: np.ndarray, parts: list[str], num_shapes: int = 10,
                      rms_displacement: float = 0.02) -> np.ndarray:
    """Hand-designed displacement fields, Gram-Schmidt orthogonalized."""
    n = len(vertices)
    part = np.array(parts)
    y = vertices[:, 1]
    xz = vertices[:, [0, 2]]
    head_mask = (part == "head") | (part == "eyes")
    arm_mask = (part == "left_arm") | (part == "right_arm")
    leg_mask = (part == "left_leg") | (part == "right_leg")
    feet_mask = part == "feet"
    torso_mask = part == "torso"

    fields = np.zeros((num_shapes, n, 3))
    fields[0][:, 1] = y - y.mean()                                   # height
    fields[1][head_mask] = vertices[head_mask] - vertices[head_mask].mean(0)  # head size
    fields[2][torso_mask, 0] = xz[torso_mask, 0]                     # torso width
    fields[2][torso_mask, 2] = xz[torso_mask, 1]
    fields[3][arm_mask, 1] = y[arm_mask] - y[arm_mask].max()         # arm length
    fields[4][leg_mask | feet_mask, 1] = y[leg_mask | feet_mask] - y[leg_mask | feet_mask].max()
    belly = torso_mask & (vertices[:, 2] > 0) & (y < 0.12)
    fields[5][belly, 2] = vertices[belly, 2]                         # belly bulge
    fields[6][arm_mask, 0] = np.sign(vertices[arm_mask, 0]) * 0.5    # shoulder width
    fields[7][head_mask, 1] = y[head_mask] - y[head_mask].mean()     # head elongation
    fields[8][feet_mask] = vertices[feet_mask] - vertices[feet_mask].mean(0)  # foot size
    fields[9][:, 0] = xz[:, 0]                                       # overall thickness
    fields[9][:, 2] = xz[:, 1]

    flat = fields.reshape(num_shapes, -1)
    basis = []
    for vec in flat:
        v = vec.copy()
        for prev in basis:
            v -= np.dot(v, prev) * prev / np.dot(prev, prev)
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise RuntimeError("degenerate blendshape field")
        basis.append(v / norm)
    scale = rms_displacement * np.sqrt(3.0 * n)
    return np.stack(basis) * scale


def _joint_vertex_sets(vertices: np.ndarray, joints: np.ndarray, k: int = 8) -> list[np.ndarray]:
    sets = []
    for j in joints:
        d = np.linalg.norm(vertices - j, axis=1)
        sets.append(np.sort(np.argsort(d, kind="stable")[:k]))
    return sets


def build_character(species: str = "human") -> CharacterMesh:
    """Full biped fixture: ~1.9k vertices, 23 joints, 10 blendshapes."""
    if species not in SPECIES:
        raise ValueError(f"unknown species {species!r}; known: {', '.join(SPECIES)}")
    head_scale, body_scale = _SPECIES_SHAPE[species]
    s = body_scale
    b = _MeshBuilder()

    # phase 0 places every tube's seam column on the -z (back) side
    _add_tube(b, "torso", ATLAS_REGIONS["torso"][0],
              (0, -0.04, 0), (0, 0.27, 0), 0.125 * s, 28, 14, taper=0.85)
    _add_sphere(b, "head", ATLAS_REGIONS["head"][0],
                (0, 0.37, 0), 0.115 * head_scale, 28, 16)
    _add_tube(b, "left_arm", ATLAS_REGIONS["left_arm"][0],
              (0.15 * s, 0.25, 0), (0.18 * s, 0.00, 0), 0.035 * s, 14, 12)
    _add_tube(b, "right_arm", ATLAS_REGIONS["right_arm"][0],
              (-0.15 * s, 0.25, 0), (-0.18 * s, 0.00, 0), 0.035 * s, 14, 12)
    _add_tube(b, "left_leg", ATLAS_REGIONS["left_leg"][0],
              (0.065 * s, 0.00, 0), (0.065 * s, -0.38, 0), 0.045 * s, 16, 14)
    _add_tube(b, "right_leg", ATLAS_REGIONS["right_leg"][0],
              (-0.065 * s, 0.00, 0), (-0.065 * s, -0.38, 0), 0.045 * s, 16, 14)
    _add_tube(b, "feet", ATLAS_REGIONS["feet"][0],
              (0.065 * s, -0.41, -0.03), (0.065 * s, -0.41, 0.09), 0.035 * s, 12, 4)
    _add_tube(b, "feet", ATLAS_REGIONS["feet"][1],
              (-0.065 * s, -0.41, -0.03), (-0.065 * s, -0.41, 0.09), 0.035 * s, 12, 4)
    eye_z = 0.115 * head_scale * 0.93
    _add_quad(b, "eyes", ATLAS_REGIONS["eyes"][0],
              (0.042, 0.385, eye_z), (0.018, 0, 0), (0, 0.022, 0))
    _add_quad(b, "eyes", ATLAS_REGIONS["eyes"][1],
              (-0.042, 0.385, eye_z), (0.018, 0, 0), (0, 0.022, 0))

    vertices = np.stack(b.vertices)
    joints = _skeleton_joints(head_scale, body_scale)
    skeleton = Skeleton(joints, JOINT_PARENTS, list(JOINT_NAMES))
    name_to_idx = {n: i for i, n in enumerate(JOINT_NAMES)}

    chains = {
        "torso": ["pelvis", "spine1", "spine2", "spine3", "chest"],
        "head": ["neck", "head"],
        "eyes": ["head"],
        "left_arm": ["clavicle_l", "shoulder_l", "elbow_l", "wrist_l"],
        "right_arm": ["clavicle_r", "shoulder_r", "elbow_r", "wrist_r"],
        "left_leg": ["hip_l", "knee_l", "ankle_l"],
        "right_leg": ["hip_r", "knee_r", "ankle_r"],
        "feet": None,  # resolved per foot below by x sign
    }
    weights = np.zeros((len(vertices), skeleton.num_joints))
    part = np.array(b.part_of)
    for part_name in np.unique(part):
        mask = part == part_name
        if part_name == "feet":
            for sign, names in ((1, ["ankle_l", "toe_l"]), (-1, ["ankle_r", "toe_r"])):
                sub = mask & (np.sign(vertices[:, 0]) == sign)
                chain = [name_to_idx[n] for n in names]
                weights[sub] = _chain_weights(vertices[sub], joints, chain,
                                              skeleton.num_joints, joints[chain])[:, :]
            continue
        chain = [name_to_idx[n] for n in chains[str(part_name)]]
        weights[mask] = _chain_weights(vertices[mask], joints, chain,
                                       skeleton.num_joints, joints[chain])

    basis = _blendshape_basis(vertices, b.part_of)
    return CharacterMesh(
        vertices=vertices,
        triangles=np.array(b.triangles, dtype=np.int64),
        uvs=np.array(b.uvs, dtype=np.float64),
        uv_indices=np.array(b.uv_indices, dtype=np.int64),
        skeleton=skeleton,
        skin_weights=SkinWeights(weights),
        blendshapes=BlendshapeBasis(vertices.copy(), basis),
        joint_vertex_sets=_joint_vertex_sets(vertices, joints),
    )


def tiny_chain_character(n_around: int = 8, n_rows: int = 9) -> CharacterMesh:
    """Minimal 4-joint kinematic tube for fast kinematics tests."""
    b = _MeshBuilder()
    _add_tube(b, "torso", (0.05, 0.05, 0.95, 0.95),
              (0, 0.0, 0), (0, 0.3, 0), 0.05, n_around, n_rows)
    vertices = np.stack(b.vertices)
    joints = np.array([[0, 0.0, 0], [0, 0.1, 0], [0, 0.2, 0], [0, 0.3, 0]])
    skeleton = Skeleton(joints, [-1, 0, 1, 2], ["root", "mid1", "mid2", "tip"])
    weights = _chain_weights(vertices, joints, [0, 1, 2, 3], 4, joints)
    basis = np.zeros((2, vertices.size))
    basis[0, 1::3] = 1.0   # lift in y
    basis[1, 0::3] = 1.0   # shift in x
    return CharacterMesh(
        vertices=vertices,
        triangles=np.array(b.triangles, dtype=np.int64),
        uvs=np.array(b.uvs, dtype=np.float64),
        uv_indices=np.array(b.uv_indices, dtype=np.int64),
        skeleton=skeleton,
        skin_weights=SkinWeights(weights),
        blendshapes=BlendshapeBasis(vertices.copy(), basis),
        joint_vertex_sets=_joint_vertex_sets(vertices, joints, k=4),
    )


def seam_test_character(n_around: int = 24, n_rows: int = 16) -> CharacterMesh:
    """Single vertical tube whose UV seam faces -z (the back view)."""
    b = _MeshBuilder()
    _add_tube(b, "torso", (0.06, 0.06, 0.94, 0.94),
              (0, -0.3, 0), (0, 0.3, 0), 0.18, n_around, n_rows)
    vertices = np.stack(b.vertices)
    joints = np.array([[0, -0.3, 0], [0, 0.3, 0]])
    skeleton = Skeleton(joints, [-1, 0], ["root", "tip"])
    weights = np.zeros((len(vertices), 2))
    weights[:, 0] = 1.0
    return CharacterMesh(
        vertices=vertices,
        triangles=np.array(b.triangles, dtype=np.int64),
        uvs=np.array(b.uvs, dtype=np.float64),
        uv_indices=np.array(b.uv_indices, dtype=np.int64),
        skeleton=skeleton,
        skin_weights=SkinWeights(weights),
        blendshapes=BlendshapeBasis(vertices.copy(), np.zeros((0, vertices.size))),
        joint_vertex_sets=_joint_vertex_sets(vertices, joints, k=4),
    )
