"""Core character types and kinematics.

Conventions:
    * y is up, the character faces +z, model units are arbitrary.
    * Pose parameters are K axis-angle triples (radians), flattened to 3K.
      The rest pose is the all-zeros vector.
    * Joint translations inside the kinematic chain are parent-relative,
      which is the only reading that makes a joint rotation pivot at the
      joint's own rest location.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

WEIGHT_SUM_TOL = 1e-6


@dataclass
class BlendshapeBasis:
    """Mean shape plus orthogonal displacement basis.

    mean_shape: (N, 3) vertex positions.
    basis: (num_shapes, 3N) displacement per unit coefficient.
    """

    mean_shape: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        self.mean_shape = np.asarray(self.mean_shape, dtype=np.float64)
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.mean_shape.ndim != 2 or self.mean_shape.shape[1] != 3:
            raise ContractError("mean_shape must be (N, 3)")
        if self.basis.ndim != 2 or self.basis.shape[1] != 3 * len(self.mean_shape):
            raise ContractError("basis vectors must have length 3N")

    @property
    def num_shapes(self) -> int:
        return self.basis.shape[0]


@dataclass
class Skeleton:
    """Kinematic tree: rest joint locations plus parent indices.

    parent[k] == -1 marks the root. Parents must precede children
    (parent[k] < k), so a single ascending pass walks the tree.
    """

    joint_rest_positions: np.ndarray
    parents: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.joint_rest_positions = np.asarray(self.joint_rest_positions, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        if self.joint_rest_positions.ndim != 2 or self.joint_rest_positions.shape[1] != 3:
            raise ContractError("joint_rest_positions must be (K, 3)")
        if self.parents.shape != (self.num_joints,):
            raise ContractError("parents must have one entry per joint")
        if int(np.sum(self.parents == -1)) != 1:
            raise ContractError("skeleton needs exactly one root (parent == -1)")
        for k, p in enumerate(self.parents):
            if p >= k or (p < 0 and p != -1):
                raise ContractError(f"joint {k}: parent {p} must be -1 or a smaller index")

    @property
    def num_joints(self) -> int:
        return len(self.joint_rest_positions)

    def ancestor_chain(self, k: int) -> list[int]:
        """Indices from the root down to joint k, inclusive."""
        if not 0 <= k < self.num_joints:
            raise ContractError(f"joint index {k} out of range (K={self.num_joints})")
        chain = []
        while k != -1:
            chain.append(k)
            k = int(self.parents[k])
        return chain[::-1]


@dataclass
class SkinWeights:
    """Per-vertex joint weights: (N, K), nonnegative, rows sum to 1."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ContractError("weights must be (N, K)")
        if np.any(self.weights < 0):
            raise ContractError("skin weights must be nonnegative")
        sums = self.weights.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > WEIGHT_SUM_TOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ContractError(f"skin weights of vertex {worst} sum to {sums[worst]:.9f}")


@dataclass
class CharacterMesh:
    """Triangle mesh with per-corner UVs, rig and identity basis.

    vertices: (N, 3); triangles: (T, 3) vertex indices;
    uvs: (M, 2) atlas coordinates in [0, 1]^2;
    uv_indices: (T, 3) per-corner indices into uvs.
    joint_vertex_sets optionally marks, per joint, the vertices whose
    average tracks the joint location when the identity shape changes.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    uvs: np.ndarray
    uv_indices: np.ndarray
    skeleton: Skeleton
    skin_weights: SkinWeights
    blendshapes: BlendshapeBasis
    joint_vertex_sets: list[np.ndarray] | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)
        self.uv_indices = np.asarray(self.uv_indices, dtype=np.int64)
        n = len(self.vertices)
        if self.triangles.size and self.triangles.max() >= n:
            raise ContractError("triangle index out of range")
        if np.any(self.uvs < -1e-9) or np.any(self.uvs > 1 + 1e-9):
            raise ContractError("UVs must lie in [0, 1]^2")
        if self.uv_indices.shape != self.triangles.shape:
            raise ContractError("uv_indices must match triangles shape")
        if self.skin_weights.weights.shape != (n, self.skeleton.num_joints):
            raise ContractError("skin weights shape must be (N, K)")
        if len(self.blendshapes.mean_shape) != n:
            raise ContractError("blendshape mean must have N vertices")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def corner_uvs(self) -> np.ndarray:
        """Per-corner UVs as a (T, 3, 2) array."""
        return self.uvs[self.uv_indices]


def rodrigues(axis_angle) -> np.ndarray:
    """Axis-angle (3-vector, radians) to a 3x3 rotation matrix.

    The zero vector maps to the identity.
    """
    a = np.asarray(axis_angle, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ContractError("axis-angle components must be finite")
    theta = float(np.linalg.norm(a))
    if theta == 0.0:
        return np.eye(3)
    kx, ky, kz = a / theta
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(theta) * k_cross + (1.0 - np.cos(theta)) * (k_cross @ k_cross)


def apply_blendshapes(basis: BlendshapeBasis, beta) -> np.ndarray:
    """Mean shape plus the linear combination of basis displacements."""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if len(beta) != basis.num_shapes:
        raise ContractError(
            f"beta has {len(beta)} coefficients, basis has {basis.num_shapes}")
    displaced = basis.mean_shape.reshape(-1) + beta @ basis.basis
    return displaced.reshape(-1, 3)


def _as_pose(pose, num_joints: int) -> np.ndarray:
    theta = np.asarray(pose, dtype=np.float64).reshape(-1)
    if len(theta) != 3 * num_joints:
        raise ContractError(f"pose must have length {3 * num_joints}, got {len(theta)}")
    return theta.reshape(num_joints, 3)


def _local_transforms(pose: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Per-joint 4x4 [R(theta_k) | t_k] with parent-relative translation."""
    k_joints = skeleton.num_joints
    locals_ = np.tile(np.eye(4), (k_joints, 1, 1))
    rest = skeleton.joint_rest_positions
    for k in range(k_joints):
        p = int(skeleton.parents[k])
        locals_[k, :3, :3] = rodrigues(pose[k])
        locals_[k, :3, 3] = rest[k] if p == -1 else rest[k] - rest[p]
    return locals_


def _global_transforms(pose: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    locals_ = _local_transforms(pose, skeleton)
    out = np.empty_like(locals_)
    for k in range(skeleton.num_joints):
        p = int(skeleton.parents[k])
        out[k] = locals_[k] if p == -1 else out[p] @ locals_[k]
    return out


def global_transform(pose, skeleton: Skeleton, k: int) -> np.ndarray:
    """World transform of joint k: the chain product ordered root -> k."""
    if not 0 <= k < skeleton.num_joints:
        raise ContractError(f"joint index {k} out of range (K={skeleton.num_joints})")
    theta = _as_pose(pose, skeleton.num_joints)
    return _global_transforms(theta, skeleton)[k]


def skin_pose(mesh: CharacterMesh, pose) -> np.ndarray:
    """Linear blend skinning of the mesh vertices under the given pose.

    Each posed vertex is the skin-weight blend of K rigid images of the
    rest vertex; the all-zeros pose returns the input vertices.
    """
    theta = _as_pose(pose, mesh.skeleton.num_joints)
    g_pose = _global_transforms(theta, mesh.skeleton)
    # G_k at rest is a pure translation to the joint's rest location, so
    # G_rest^-1 is the opposite translation.
    rest = mesh.skeleton.joint_rest_positions
    g_rel = g_pose.copy()
    g_rel[:, :3, 3] = g_pose[:, :3, 3] - np.einsum("kij,kj->ki", g_pose[:, :3, :3], rest)

    w = mesh.skin_weights.weights  # (N, K)
    v = mesh.vertices
    rotated = np.einsum("kij,nj->nki", g_rel[:, :3, :3], v) + g_rel[:, :3, 3][None, :, :]
    return np.einsum("nk,nki->ni", w, rotated)


def animate(mesh: CharacterMesh, poses) -> list[np.ndarray]:
    """skin_pose applied to each pose in sequence; empty in, empty out."""
    return [skin_pose(mesh, pose) for pose in poses]


def regress_joints(mesh: CharacterMesh, vertices: np.ndarray) -> Skeleton:
    """Recompute joint locations from (blendshaped) vertices.

    Each joint moves to the average of its marked vertex set, keeping
    joints attached to the identity shape. Requires joint_vertex_sets.
    """
    if mesh.joint_vertex_sets is None:
        raise ContractError("mesh has no joint_vertex_sets regressor")
    vertices = np.asarray(vertices, dtype=np.float64)
    joints = np.stack([vertices[idx].mean(axis=0) for idx in mesh.joint_vertex_sets])
    return Skeleton(joints, mesh.skeleton.parents.copy(), list(mesh.skeleton.names))
