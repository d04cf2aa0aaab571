"""Deterministic software rasterizer with exact texel gradients.

Geometry is fixed during texture training, so coverage is computed by hard
z-buffered rasterization and only the shading step (bilinear texture
sampling) is differentiable: ``texture_gradient`` is the exact adjoint of
``shade`` because both consume the same per-pixel sampling plan.

Conventions:
    * Cameras sit on a sphere around the origin, look at the origin, y up.
      Azimuth 0 looks from +z; elevation is measured up from the horizontal
      plane (the publication convention being ambiguous, this one is fixed
      here and recorded in the config).
    * Pixel (row i, col j) has its center at screen (j + 0.5, i + 0.5);
      row 0 is the top of the image.
    * UV (u, v) addresses the texture with texel (i, j) centered at
      u = (j + 0.5) / W, v = (i + 0.5) / H; sampling clamps to the edge.
    * Depth is camera-space distance along the view direction. Triangles
      with any corner nearer than the near plane are dropped whole
      (no clipping); fragments outside [near, far] are discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

BACKGROUND_TRI = -1
DEFAULT_VIEW_AZIMUTHS = (0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0)
DEFAULT_VIEW_RADIUS = 1.5
DEFAULT_VIEW_ELEVATION = 80.0
DEFAULT_FOV = 40.0


@dataclass(frozen=True)
class Camera:
    """Perspective camera on a sphere, aimed at the origin."""

    azimuth_deg: float
    radius: float
    elevation_deg: float
    fov_deg: float = DEFAULT_FOV
    width: int = 64
    height: int = 64
    near: float = 0.1
    far: float = 10.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ContractError("camera radius must be positive")
        if not 0 < self.fov_deg < 180:
            raise ContractError("fov must be in (0, 180) degrees")

    def position(self) -> np.ndarray:
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        return self.radius * np.array(
            [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors; forward points at the origin."""
        pos = self.position()
        forward = -pos / np.linalg.norm(pos)
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, world_up)
        norm = np.linalg.norm(right)
        if norm < 1e-9:  # looking straight up/down the y axis
            az = math.radians(self.azimuth_deg)
            right = np.array([math.cos(az), 0.0, -math.sin(az)])
        else:
            right = right / norm
        up = np.cross(right, forward)
        return right, up, forward

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Points (N, 3) -> screen coords (N, 2) and view depths (N,)."""
        right, up, forward = self.basis()
        rel = np.asarray(points, dtype=np.float64) - self.position()
        depth = rel @ forward
        half_h = math.tan(math.radians(self.fov_deg) / 2.0)
        half_w = half_h * self.width / self.height
        with np.errstate(divide="ignore", invalid="ignore"):
            ndc_x = (rel @ right) / (depth * half_w)
            ndc_y = (rel @ up) / (depth * half_h)
        sx = (ndc_x + 1.0) * 0.5 * self.width
        sy = (1.0 - ndc_y) * 0.5 * self.height
        return np.stack([sx, sy], axis=1), depth


def camera_from_spherical(azimuth_deg: float, radius: float, elevation_deg: float,
                          fov_deg: float = DEFAULT_FOV, size: int | tuple[int, int] = 64,
                          near: float = 0.1, far: float = 10.0) -> Camera:
    if isinstance(size, int):
        size = (size, size)
    return Camera(azimuth_deg, radius, elevation_deg, fov_deg,
                  width=size[0], height=size[1], near=near, far=far)


def view_set(size: int | tuple[int, int] = 64, radius: float = DEFAULT_VIEW_RADIUS,
             elevation_deg: float = DEFAULT_VIEW_ELEVATION,
             fov_deg: float = DEFAULT_FOV,
             azimuths=DEFAULT_VIEW_AZIMUTHS) -> list[Camera]:
    """The standard multi-view ring of cameras."""
    return [camera_from_spherical(a, radius, elevation_deg, fov_deg, size) for a in azimuths]


@dataclass
class CoverageMap:
    """Per-pixel nearest-surface coverage.

    tri_id: (H, W) int32, BACKGROUND_TRI where uncovered.
    bary: (H, W, 3) perspective-correct barycentrics (zeros on background).
    uv: (H, W, 2) interpolated texture coordinates.
    depth: (H, W) camera-space depth, +inf on background.
    """

    tri_id: np.ndarray
    bary: np.ndarray
    uv: np.ndarray
    depth: np.ndarray
    _plans: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tri_id.shape

    def covered(self) -> np.ndarray:
        return self.tri_id != BACKGROUND_TRI

    def sampling_plan(self, tex_h: int, tex_w: int):
        """(pixel flat indices, texel flat indices (P,4), weights (P,4)).

        The bilinear footprint of every covered pixel; weights per pixel
        sum to 1. Cached per texture resolution.
        """
        key = (tex_h, tex_w)
        if key not in self._plans:
            mask = self.covered()
            pix = np.flatnonzero(mask.reshape(-1))
            uv = self.uv.reshape(-1, 2)[pix]
            idx, w = bilinear_footprint(uv, tex_h, tex_w)
            self._plans[key] = (pix, idx, w)
        return self._plans[key]


@dataclass
class RenderedView:
    """rgb (H, W, 3) in [0,1]; depth (H, W) camera-space with +inf background."""

    rgb: np.ndarray
    depth: np.ndarray
    coverage: CoverageMap


def bilinear_footprint(uv: np.ndarray, tex_h: int, tex_w: int):
    """Flat texel indices (N, 4) and weights (N, 4) for bilinear sampling."""
    uv = np.asarray(uv, dtype=np.float64)
    x = uv[:, 0] * tex_w - 0.5
    y = uv[:, 1] * tex_h - 0.5
    j0 = np.floor(x)
    i0 = np.floor(y)
    fx = x - j0
    fy = y - i0
    j0 = j0.astype(np.int64)
    i0 = i0.astype(np.int64)
    j0c = np.clip(j0, 0, tex_w - 1)
    j1c = np.clip(j0 + 1, 0, tex_w - 1)
    i0c = np.clip(i0, 0, tex_h - 1)
    i1c = np.clip(i0 + 1, 0, tex_h - 1)
    idx = np.stack([i0c * tex_w + j0c, i0c * tex_w + j1c,
                    i1c * tex_w + j0c, i1c * tex_w + j1c], axis=1)
    w = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                  (1 - fx) * fy, fx * fy], axis=1)
    return idx, w


def bilinear_sample(texture: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) texture at (N, 2) UVs; returns (N, C)."""
    tex = np.asarray(texture, dtype=np.float64)
    h, w = tex.shape[:2]
    idx, wts = bilinear_footprint(np.atleast_2d(uv), h, w)
    flat = tex.reshape(h * w, -1)
    return np.einsum("nk,nkc->nc", wts, flat[idx])


_BATCH_WINDOW = 16  # triangles with bboxes up to this size take the batched path


def _triangle_fragments(tri_ids, pts, d, gx, gy, near, far):
    """Candidate fragments for a batch of triangles on pixel-center grids.

    tri_ids: (T,) triangle indices; pts: (T, 3, 2) screen corners;
    d: (T, 3) view depths; gx, gy: (T, ...) pixel-center coordinates
    (entries set to nan are ignored). Returns flat arrays
    (tri, row, col, frag_depth, pc0, pc1).
    """
    a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
    area2 = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    extra = (slice(None),) + (None,) * (gx.ndim - 1)
    l0 = ((b[:, 0][extra] - gx) * (c[:, 1][extra] - gy)
          - (b[:, 1][extra] - gy) * (c[:, 0][extra] - gx)) / area2[extra]
    l1 = ((c[:, 0][extra] - gx) * (a[:, 1][extra] - gy)
          - (c[:, 1][extra] - gy) * (a[:, 0][extra] - gx)) / area2[extra]
    l2 = 1.0 - l0 - l1
    with np.errstate(invalid="ignore"):
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    inv_d = 1.0 / d
    denom = (l0 * inv_d[:, 0][extra] + l1 * inv_d[:, 1][extra]
             + l2 * inv_d[:, 2][extra])
    with np.errstate(divide="ignore", invalid="ignore"):
        frag_depth = 1.0 / denom
        ok = inside & (denom > 0) & (frag_depth >= near) & (frag_depth <= far)
    if not ok.any():
        empty = np.empty(0)
        return (np.empty(0, dtype=np.int64),) * 3 + (empty,) * 3
    tri_grid = np.broadcast_to(tri_ids[extra], gx.shape)
    sel_tri = tri_grid[ok]
    sel_row = (gy[ok] - 0.5).astype(np.int64)
    sel_col = (gx[ok] - 0.5).astype(np.int64)
    sel_depth = frag_depth[ok]
    t_of = np.searchsorted(tri_ids, sel_tri)
    pc0 = l0[ok] * inv_d[t_of, 0] * sel_depth
    pc1 = l1[ok] * inv_d[t_of, 1] * sel_depth
    return sel_tri, sel_row, sel_col, sel_depth, pc0, pc1


def rasterize(mesh, posed_vertices, camera: Camera) -> CoverageMap:
    """Z-buffered coverage of the mesh under the camera.

    Deterministic: the nearest fragment wins each pixel; exact depth ties
    go to the lowest triangle index. Zero-area triangles are skipped.
    """
    verts = mesh.vertices if posed_vertices is None else np.asarray(posed_vertices, dtype=np.float64)
    if not np.all(np.isfinite(verts)):
        raise ContractError("posed vertices must be finite")
    h, w = camera.height, camera.width
    screen, depth = camera.project(verts)
    corner_uvs = mesh.corner_uvs()

    tris = np.asarray(mesh.triangles)
    all_pts = screen[tris]   # (T, 3, 2)
    all_d = depth[tris]      # (T, 3)
    a, b, c = all_pts[:, 0], all_pts[:, 1], all_pts[:, 2]
    area2 = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    lo_x = np.maximum(0, np.floor(all_pts[:, :, 0].min(1) - 0.5)).astype(np.int64)
    hi_x = np.minimum(w - 1, np.ceil(all_pts[:, :, 0].max(1) - 0.5)).astype(np.int64)
    lo_y = np.maximum(0, np.floor(all_pts[:, :, 1].min(1) - 0.5)).astype(np.int64)
    hi_y = np.minimum(h - 1, np.ceil(all_pts[:, :, 1].max(1) - 0.5)).astype(np.int64)
    valid = (~np.any(all_d <= camera.near, axis=1) & ~np.all(all_d > camera.far, axis=1)
             & (np.abs(area2) >= 1e-12) & (lo_x <= hi_x) & (lo_y <= hi_y))

    span_x = hi_x - lo_x + 1
    span_y = hi_y - lo_y + 1
    small = valid & (span_x <= _BATCH_WINDOW) & (span_y <= _BATCH_WINDOW)
    big = valid & ~small

    frags = []
    small_idx = np.flatnonzero(small)
    if small_idx.size:
        win = np.arange(_BATCH_WINDOW)
        gx = lo_x[small_idx, None, None] + win[None, None, :] + 0.5
        gy = lo_y[small_idx, None, None] + win[None, :, None] + 0.5
        oob = ((gx > hi_x[small_idx, None, None] + 0.5)
               | (gy > hi_y[small_idx, None, None] + 0.5))
        gx = np.where(oob, np.nan, gx)
        gy = np.where(oob, np.nan, gy)
        frags.append(_triangle_fragments(small_idx, all_pts[small_idx],
                                         all_d[small_idx], gx, gy,
                                         camera.near, camera.far))
    for t in np.flatnonzero(big):
        px = np.arange(lo_x[t], hi_x[t] + 1) + 0.5
        py = np.arange(lo_y[t], hi_y[t] + 1) + 0.5
        gx, gy = np.meshgrid(px, py)
        frags.append(_triangle_fragments(np.array([t]), all_pts[t:t + 1],
                                         all_d[t:t + 1], gx[None], gy[None],
                                         camera.near, camera.far))

    tri_id = np.full((h, w), BACKGROUND_TRI, dtype=np.int32)
    bary = np.zeros((h, w, 3))
    uv_img = np.zeros((h, w, 2))
    depth_img = np.full((h, w), np.inf)
    if frags:
        f_tri = np.concatenate([f[0] for f in frags])
        f_row = np.concatenate([f[1] for f in frags])
        f_col = np.concatenate([f[2] for f in frags])
        f_depth = np.concatenate([f[3] for f in frags])
        f_pc0 = np.concatenate([f[4] for f in frags])
        f_pc1 = np.concatenate([f[5] for f in frags])
        if f_tri.size:
            f_pix = f_row * w + f_col
            order = np.lexsort((f_tri, f_depth, f_pix))
            pix_sorted = f_pix[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = pix_sorted[1:] != pix_sorted[:-1]
            win_sel = order[first]
            rows, cols = f_row[win_sel], f_col[win_sel]
            pc0, pc1 = f_pc0[win_sel], f_pc1[win_sel]
            pc2 = 1.0 - pc0 - pc1
            t_sel = f_tri[win_sel]
            tri_id[rows, cols] = t_sel.astype(np.int32)
            bary[rows, cols, 0] = pc0
            bary[rows, cols, 1] = pc1
            bary[rows, cols, 2] = pc2
            uvs = corner_uvs[t_sel]
            uv_img[rows, cols, 0] = pc0 * uvs[:, 0, 0] + pc1 * uvs[:, 1, 0] + pc2 * uvs[:, 2, 0]
            uv_img[rows, cols, 1] = pc0 * uvs[:, 0, 1] + pc1 * uvs[:, 1, 1] + pc2 * uvs[:, 2, 1]
            depth_img[rows, cols] = f_depth[win_sel]

    return CoverageMap(tri_id=tri_id, bary=bary, uv=uv_img, depth=depth_img)


def _pixels(texture) -> np.ndarray:
    arr = getattr(texture, "pixels", texture)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"texture must be HxWx3, got {arr.shape}")
    return arr


def shade(coverage: CoverageMap, texture, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Bilinear texture lookup per covered pixel; background elsewhere.

    Linear in the texture; its adjoint is texture_gradient.
    """
    tex = _pixels(texture)
    th, tw = tex.shape[:2]
    h, w = coverage.shape
    out = np.empty((h, w, 3))
    out[:] = np.asarray(background, dtype=np.float64)
    pix, idx, wts = coverage.sampling_plan(th, tw)
    flat = tex.reshape(th * tw, 3)
    out.reshape(-1, 3)[pix] = np.einsum("nk,nkc->nc", wts, flat[idx])
    return out


def texture_gradient(coverage: CoverageMap, upstream: np.ndarray,
                     tex_h: int, tex_w: int) -> np.ndarray:
    """Adjoint of shade: scatter upstream pixel gradients onto texels."""
    upstream = np.asarray(upstream, dtype=np.float64)
    h, w = coverage.shape
    if upstream.shape != (h, w, 3):
        raise ContractError(
            f"upstream shape {upstream.shape} does not match render {(h, w, 3)}")
    pix, idx, wts = coverage.sampling_plan(tex_h, tex_w)
    grad = np.zeros((tex_h * tex_w, 3))
    up = upstream.reshape(-1, 3)[pix]
    np.add.at(grad, idx.reshape(-1),
              (wts[:, :, None] * up[:, None, :]).reshape(-1, 3))
    return grad.reshape(tex_h, tex_w, 3)


def render_depth(coverage: CoverageMap) -> np.ndarray:
    """Depth normalized to [0, 1] over covered pixels (near -> 1, far -> 0).

    Normalization is per image over the covered depth range; background is
    0. A single-depth image maps to 1 everywhere covered.
    """
    mask = coverage.covered()
    out = np.zeros(coverage.shape)
    if not mask.any():
        return out
    z = coverage.depth[mask]
    zmin, zmax = z.min(), z.max()
    if zmax == zmin:
        out[mask] = 1.0
    else:
        out[mask] = (zmax - z) / (zmax - zmin)
    return out


def render_view(mesh, camera: Camera, texture, posed_vertices=None,
                background=(1.0, 1.0, 1.0)) -> RenderedView:
    """Rasterize + shade in one call."""
    cov = rasterize(mesh, posed_vertices, camera)
    rgb = shade(cov, texture, background=background)
    return RenderedView(rgb=rgb, depth=cov.depth.copy(), coverage=cov)
