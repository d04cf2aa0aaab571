"""UV atlas analysis and seam repair.

A seam is a 3D mesh edge whose two incident triangles reference different
UV coordinates for that edge: texture discontinuities there show up as
lines on the surface. This module finds them, measures the color jump
across them, blurs a band around them, and repairs the back-view seam by
masked restoration plus back-projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rasterizer as ras
from .errors import ContractError, ToontexError

SEAM_UV_TOL = 1e-9


@dataclass
class TextureMap:
    """Square RGB atlas in [0, 1] plus a chart-membership mask."""

    pixels: np.ndarray
    chart_mask: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ContractError(f"texture must be HxWx3, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if h != w:
            raise ContractError(f"atlas must be square, got {h}x{w}")
        if not np.all(np.isfinite(self.pixels)):
            raise ContractError("texture values must be finite")
        if np.any(self.pixels < -1e-9) or np.any(self.pixels > 1 + 1e-9):
            raise ContractError("texture values must lie in [0, 1]")
        if self.chart_mask is None:
            self.chart_mask = np.ones((h, w), dtype=bool)
        else:
            self.chart_mask = np.asarray(self.chart_mask, dtype=bool)
            if self.chart_mask.shape != (h, w):
                raise ContractError("chart_mask shape must match pixels")

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "TextureMap":
        return TextureMap(self.pixels.copy(), self.chart_mask.copy())


@dataclass
class SeamEdge:
    """One 3D edge seen from both of its UV charts.

    uv_a and uv_b are (2, 2) segment endpoints; row k of each side maps to
    the same 3D endpoint, so equal parameters address the same surface
    point on both sides.
    """

    uv_a: np.ndarray
    uv_b: np.ndarray
    samples: int


@dataclass
class SeamEdgeSet:
    edges: list[SeamEdge] = field(default_factory=list)
    nonmanifold_edges: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.edges)


def extract_seams(mesh, atlas_size: int = 64) -> SeamEdgeSet:
    """All mesh edges whose two incident triangles disagree in UV.

    Edges incident to more than two triangles are reported in
    nonmanifold_edges and skipped. Sample counts follow
    max(8, ceil(UV length * atlas_size)).
    """
    incident: dict[tuple[int, int], list[np.ndarray]] = {}
    uvs = mesh.uvs
    for tri, uvt in zip(mesh.triangles, mesh.uv_indices):
        for c in range(3):
            v0, v1 = int(tri[c]), int(tri[(c + 1) % 3])
            t0, t1 = int(uvt[c]), int(uvt[(c + 1) % 3])
            if v0 > v1:
                v0, v1, t0, t1 = v1, v0, t1, t0
            incident.setdefault((v0, v1), []).append(uvs[[t0, t1]])

    out = SeamEdgeSet()
    for edge in sorted(incident):
        sides = incident[edge]
        if len(sides) == 1:
            continue
        if len(sides) > 2:
            out.nonmanifold_edges.append(edge)
            continue
        a, b = sides
        if np.max(np.abs(a - b)) <= SEAM_UV_TOL:
            continue
        length = max(float(np.linalg.norm(a[1] - a[0])), float(np.linalg.norm(b[1] - b[0])))
        samples = max(8, int(math.ceil(length * atlas_size)))
        out.edges.append(SeamEdge(uv_a=a.copy(), uv_b=b.copy(), samples=samples))
    return out


def _seam_sample_points(seams: SeamEdgeSet):
    """Concatenated paired sample UVs across all seam edges."""
    pts_a, pts_b = [], []
    for e in seams.edges:
        t = (np.arange(e.samples) + 0.5) / e.samples
        pts_a.append(e.uv_a[0] + t[:, None] * (e.uv_a[1] - e.uv_a[0]))
        pts_b.append(e.uv_b[0] + t[:, None] * (e.uv_b[1] - e.uv_b[0]))
    if not pts_a:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(pts_a), np.concatenate(pts_b)


def seam_discontinuity(texture: TextureMap, seams: SeamEdgeSet) -> float:
    """Mean absolute RGB difference across all seam sample pairs, in [0, 1]."""
    pts_a, pts_b = _seam_sample_points(seams)
    if len(pts_a) == 0:
        return 0.0
    ca = ras.bilinear_sample(texture.pixels, pts_a)
    cb = ras.bilinear_sample(texture.pixels, pts_b)
    return float(np.mean(np.abs(ca - cb)))


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(4.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _separable_conv_zero_pad(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = len(kernel) // 2
    pad = ((r, r), (r, r)) + ((0, 0),) * (image.ndim - 2)
    padded = np.pad(image, pad, mode="constant")
    tmp = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        tmp[:, r:-r or None] += kv * padded[:, i:i + image.shape[1]]
    out = np.zeros_like(image)
    for i, kv in enumerate(kernel):
        out += kv * tmp[i:i + image.shape[0], r:-r or None]
    return out


def masked_gaussian_blur(image: np.ndarray, mask: np.ndarray,
                         sigma: float) -> np.ndarray:
    """Normalized Gaussian blur that only reads texels inside `mask`.

    Kernel truncated at 4 sigma. Texels whose kernel support misses the
    mask entirely keep their input value. Constant content inside the mask
    stays exactly constant.
    """
    k = _gaussian_kernel(sigma)
    m = mask.astype(np.float64)
    num = _separable_conv_zero_pad(image * m[:, :, None], k)
    den = _separable_conv_zero_pad(m, k)
    out = image.copy()
    covered = den > 0
    out[covered] = num[covered] / den[covered][:, None]
    return out


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur over the whole image (all-true mask)."""
    return masked_gaussian_blur(image, np.ones(image.shape[:2], dtype=bool), sigma)


def seam_band_mask(seams: SeamEdgeSet, resolution: int, band: float) -> np.ndarray:
    """Texels within `band` texels of any seam segment."""
    mark = np.zeros((resolution, resolution), dtype=bool)
    for e in seams.edges:
        for seg in (e.uv_a, e.uv_b):
            length_px = float(np.linalg.norm(seg[1] - seg[0])) * resolution
            n = max(2, int(math.ceil(length_px * 4)))
            t = np.linspace(0.0, 1.0, n)
            pts = seg[0] + t[:, None] * (seg[1] - seg[0])
            cols = np.clip(np.round(pts[:, 0] * resolution - 0.5).astype(int), 0, resolution - 1)
            rows = np.clip(np.round(pts[:, 1] * resolution - 0.5).astype(int), 0, resolution - 1)
            mark[rows, cols] = True
    if not mark.any():
        return mark
    dist = ndimage.distance_transform_edt(~mark)
    return dist <= band


def blur_boundary(texture: TextureMap, seams: SeamEdgeSet,
                  sigma: float = 2.0, band: float = 6.0) -> TextureMap:
    """Gaussian-blur only the band around seam segments.

    The blur is chart-aware: each connected chart component is blurred
    with a normalized masked kernel, so colors never bleed across chart
    gaps or from the background, and flat charts stay exactly flat.
    Texels outside (band AND chart) are bit-identical to the input.
    """
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    res = texture.resolution
    band = min(float(band), float(res))
    band_mask = seam_band_mask(seams, res, band)
    out = texture.copy()
    if not band_mask.any():
        return out
    labels, count = ndimage.label(texture.chart_mask)
    for lab in range(1, count + 1):
        chart = labels == lab
        target = band_mask & chart
        if not target.any():
            continue
        blurred = masked_gaussian_blur(texture.pixels, chart, sigma)
        out.pixels[target] = np.clip(blurred[target], 0.0, 1.0)
    return out


def backproject(view: ras.RenderedView, new_rgb: np.ndarray,
                texture: TextureMap) -> TextureMap:
    """Splat view pixel colors back onto the texels they sampled.

    Every covered pixel distributes its color over its four bilinear
    footprint texels; touched texels are normalized by accumulated weight,
    untouched texels keep their previous values.
    """
    new_rgb = np.asarray(new_rgb, dtype=np.float64)
    h, w = view.coverage.shape
    if new_rgb.shape != (h, w, 3):
        raise ContractError(f"new_rgb shape {new_rgb.shape} must be {(h, w, 3)}")
    res = texture.resolution
    pix, idx, wts = view.coverage.sampling_plan(res, res)
    colors = new_rgb.reshape(-1, 3)[pix]
    accum = np.zeros((res * res, 3))
    wsum = np.zeros(res * res)
    np.add.at(accum, idx.reshape(-1), (wts[:, :, None] * colors[:, None, :]).reshape(-1, 3))
    np.add.at(wsum, idx.reshape(-1), wts.reshape(-1))
    out = texture.copy()
    touched = wsum > 0
    flat = out.pixels.reshape(-1, 3)
    flat[touched] = accum[touched] / wsum[touched, None]
    return out


def pull_push_fill(image: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Fill unknown pixels by pull-push (downsample-fill-upsample).

    Known pixels are returned unchanged; unknown pixels take the color of
    the finest pyramid level that has coverage there. A fully unknown
    image fills with mid gray.
    """
    image = np.asarray(image, dtype=np.float64)
    known = np.asarray(known, dtype=bool)
    levels = [(image * known[:, :, None], known.astype(np.float64))]
    while max(levels[-1][1].shape) > 1:
        c, wgt = levels[-1]
        h, w = wgt.shape
        ph, pw = h + h % 2, w + w % 2
        cp = np.zeros((ph, pw, 3))
        cp[:h, :w] = c
        wp = np.zeros((ph, pw))
        wp[:h, :w] = wgt
        cd = cp[0::2, 0::2] + cp[1::2, 0::2] + cp[0::2, 1::2] + cp[1::2, 1::2]
        wd = wp[0::2, 0::2] + wp[1::2, 0::2] + wp[0::2, 1::2] + wp[1::2, 1::2]
        levels.append((cd, wd))
    c, wgt = levels[-1]
    filled = np.where(wgt[:, :, None] > 0, c / np.maximum(wgt, 1e-12)[:, :, None], 0.5)
    for c, wgt in reversed(levels[:-1]):
        h, w = wgt.shape
        jj, ii = np.meshgrid(np.arange(w), np.arange(h))
        centers = np.stack([(jj.ravel() + 0.5) / w, (ii.ravel() + 0.5) / h], axis=1)
        up = ras.bilinear_sample(filled, centers).reshape(h, w, 3)
        have = wgt[:, :, None] > 0
        filled = np.where(have, c / np.maximum(wgt, 1e-12)[:, :, None], up)
    return np.where(known[:, :, None], image, np.clip(filled, 0.0, 1.0))


class PullPushRestorer:
    """Default image restorer: fills the masked region by pull-push."""

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return pull_push_fill(image, ~np.asarray(mask, dtype=bool))


def identity_restorer(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64)


def fix_back_seam(mesh, texture: TextureMap, restorer=None,
                  azimuth_deg: float = 180.0, elevation_deg: float = 0.0,
                  radius: float = ras.DEFAULT_VIEW_RADIUS,
                  fov_deg: float = ras.DEFAULT_FOV,
                  view_size: int | None = None,
                  mask_width_frac: float = 0.04) -> TextureMap:
    """Repair the seam crossing the back view.

    Renders the rest-posed mesh from the back, masks a vertical line at
    the image center, lets the restorer fill it, and back-projects only
    the masked covered pixels. Texels outside that footprint stay
    bit-identical; mask width 0 is a no-op.
    """
    if restorer is None:
        restorer = PullPushRestorer()
    res = texture.resolution
    if view_size is None:
        view_size = max(256, 8 * res)
    width_px = int(round(mask_width_frac * view_size))
    if width_px <= 0:
        return texture.copy()

    cam = ras.camera_from_spherical(azimuth_deg, radius, elevation_deg, fov_deg, view_size)
    view = ras.render_view(mesh, cam, texture)
    mask = np.zeros((view_size, view_size), dtype=bool)
    lo = view_size // 2 - width_px // 2
    mask[:, lo:lo + width_px] = True

    try:
        restored = np.asarray(restorer(view.rgb, mask), dtype=np.float64)
    except Exception as exc:
        raise ToontexError(f"seam restorer failed: {exc}") from exc
    if restored.shape != view.rgb.shape:
        raise ContractError(
            f"restorer returned shape {restored.shape}, expected {view.rgb.shape}")

    keep = view.coverage.covered() & mask
    limited = ras.CoverageMap(
        tri_id=np.where(keep, view.coverage.tri_id, ras.BACKGROUND_TRI),
        bary=view.coverage.bary,
        uv=view.coverage.uv,
        depth=view.coverage.depth,
    )
    limited_view = ras.RenderedView(rgb=view.rgb, depth=view.depth, coverage=limited)
    return backproject(limited_view, restored, texture)
