"""Quantitative evaluation: FID, KID, CLIP score, seam and detail metrics.

FID and KID are computed from their exact formulas over pluggable feature
extractors. The default handcrafted 64-dim extractor keeps ablation trends
internally consistent but is NOT comparable to published numbers computed
with Inception features; a network-backed embedding service can be plugged
in through the same interface for comparability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import rasterizer as ras
from .errors import ContractError, ExternalServiceError
from .uvtools import TextureMap

FID_EPS = 1e-6


class FeatureExtractor(Protocol):
    dim: int

    def extract(self, image: np.ndarray) -> np.ndarray: ...


def _resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    jj, ii = np.meshgrid(np.arange(size), np.arange(size))
    uv = np.stack([(jj.ravel() + 0.5) / size, (ii.ravel() + 0.5) / size], axis=1)
    return ras.bilinear_sample(image, uv).reshape(size, size, -1)


class HandcraftedFeatureExtractor:
    """64-dim deterministic features: 6x6 luminance grid, Laplacian-pyramid
    band energies, color histogram moments, global luma/gradient stats."""

    dim = 64

    def extract(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ContractError(f"expected HxWx3 image, got {img.shape}")
        img = _resize_bilinear(img, 64)
        luma = img @ np.array([0.299, 0.587, 0.114])

        # 6x6 block means over a 60x60 center crop (64 is not divisible by 6)
        crop = luma[2:62, 2:62]
        blocks = crop.reshape(6, 10, 6, 10).mean(axis=(1, 3)).ravel()  # 36

        bands = []
        level = img
        for _ in range(4):
            h, w = level.shape[:2]
            down = level[: h - h % 2, : w - w % 2]
            down = 0.25 * (down[0::2, 0::2] + down[1::2, 0::2]
                           + down[0::2, 1::2] + down[1::2, 1::2])
            up = np.repeat(np.repeat(down, 2, axis=0), 2, axis=1)[:h, :w]
            band = level - up
            bands.extend(band.reshape(-1, 3).std(axis=0))  # 3 per level
            level = down
        bands = np.asarray(bands)  # 12

        flat = img.reshape(-1, 3)
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        centered = flat - mean
        skew = (centered ** 3).mean(axis=0) / np.maximum(std, 1e-9) ** 3
        denom = np.maximum(std, 1e-9)
        corr = [
            float((centered[:, 0] * centered[:, 1]).mean() / (denom[0] * denom[1])),
            float((centered[:, 0] * centered[:, 2]).mean() / (denom[0] * denom[2])),
            float((centered[:, 1] * centered[:, 2]).mean() / (denom[1] * denom[2])),
        ]
        moments = np.concatenate([mean, std, skew, corr])  # 12

        gy, gx = np.gradient(luma)
        gmag = np.sqrt(gx * gx + gy * gy)
        stats = np.array([luma.mean(), luma.std(), gmag.mean(), gmag.std()])  # 4

        feat = np.concatenate([blocks, bands, moments, stats])
        assert feat.shape == (self.dim,)
        return feat


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _fid_with_info(real_features: np.ndarray, fake_features: np.ndarray):
    real = np.asarray(real_features, dtype=np.float64)
    fake = np.asarray(fake_features, dtype=np.float64)
    if real.ndim != 2 or fake.ndim != 2 or real.shape[1] != fake.shape[1]:
        raise ContractError("feature sets must be 2-D with equal dimensionality")
    if len(real) < 2 or len(fake) < 2:
        raise ContractError("need at least 2 samples per side")
    mu1, mu2 = real.mean(axis=0), fake.mean(axis=0)
    s1 = np.atleast_2d(np.cov(real, rowvar=False))
    s2 = np.atleast_2d(np.cov(fake, rowvar=False))
    regularized = False
    eye = np.eye(s1.shape[0])
    if min(np.linalg.eigvalsh(s1)[0], np.linalg.eigvalsh(s2)[0]) < FID_EPS:
        s1 = s1 + FID_EPS * eye
        s2 = s2 + FID_EPS * eye
        regularized = True
    # symmetric square-root trick: sqrtm(S1 S2) has the same trace as
    # sqrtm(S1^1/2 S2 S1^1/2), which stays symmetric PSD
    root1 = _sqrtm_psd(s1)
    cross = _sqrtm_psd(root1 @ s2 @ root1)
    value = float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2)
                  - 2.0 * np.trace(cross))
    return value, regularized


def fid(real_features: np.ndarray, fake_features: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    Singular covariances are handled by eps*I regularization (eps=1e-6);
    use the MetricReport path to see whether it was applied.
    """
    return _fid_with_info(real_features, fake_features)[0]


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel; diagonals are
    excluded from all three terms (identical aligned sets give exactly 0)."""
    m = len(x)
    kxx = _poly_kernel(x, x)
    kyy = _poly_kernel(y, y)
    kxy = _poly_kernel(x, y)
    txx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    tyy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    txy = (kxy.sum() - np.trace(kxy)) / (m * (m - 1))
    return float(txx + tyy - 2.0 * txy)


def kid(real_features: np.ndarray, fake_features: np.ndarray,
        subset_size: int = 100, subsets: int = 100, seed: int = 0) -> float:
    """Mean unbiased MMD^2 over seeded random subsets.

    When subset_size equals a side's full size that side is used in its
    stored order, so kid(X, X, subset_size=len(X), subsets=1) is exactly 0.
    """
    real = np.asarray(real_features, dtype=np.float64)
    fake = np.asarray(fake_features, dtype=np.float64)
    if len(real) < subset_size or len(fake) < subset_size:
        raise ContractError(
            f"both sides need >= subset_size={subset_size} samples")
    if subset_size < 2:
        raise ContractError("subset_size must be at least 2")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(subsets):
        xs = real if subset_size == len(real) else \
            real[rng.choice(len(real), subset_size, replace=False)]
        ys = fake if subset_size == len(fake) else \
            fake[rng.choice(len(fake), subset_size, replace=False)]
        vals.append(_mmd2_unbiased(xs, ys))
    return float(np.mean(vals))


class EmbeddingClient(Protocol):
    def embed_image(self, image: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


class HttpEmbeddingClient:
    """HTTP/JSON embedding service: image or text in, float vector out."""

    def __init__(self, endpoint: str, token_env: str = "TOONTEX_EMBED_TOKEN",
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout = timeout

    def _post(self, payload: dict) -> np.ndarray:
        import os

        import requests

        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(self.endpoint, json=payload, headers=headers,
                                 timeout=self.timeout)
            resp.raise_for_status()
            return np.asarray(resp.json()["embedding"], dtype=np.float64)
        except Exception as exc:
            raise ExternalServiceError(f"embedding request failed: {exc}") from exc

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        return self._post({"image": np.asarray(image).tolist()})

    def embed_text(self, text: str) -> np.ndarray:
        return self._post({"text": text})


def clip_score(images: list[np.ndarray], prompt: str,
               embedder: EmbeddingClient | None) -> float:
    """100 x mean cosine similarity between image and prompt embeddings."""
    if embedder is None:
        raise ExternalServiceError("no embedding client configured")
    if not images:
        raise ContractError("clip_score needs at least one image")
    text_vec = np.asarray(embedder.embed_text(prompt), dtype=np.float64)
    tnorm = np.linalg.norm(text_vec)
    sims = []
    for img in images:
        vec = np.asarray(embedder.embed_image(img), dtype=np.float64)
        sims.append(float(vec @ text_vec / (np.linalg.norm(vec) * tnorm + 1e-12)))
    return 100.0 * float(np.mean(sims))


def hf_energy(texture, mask: np.ndarray | None = None) -> float:
    """Variance of the 5-point discrete Laplacian over chart texels.

    The Laplacian wraps periodically; the variance pools all channels of
    the masked texels.
    """
    pixels = np.asarray(getattr(texture, "pixels", texture), dtype=np.float64)
    if mask is None:
        mask = getattr(texture, "chart_mask", None)
    if mask is None:
        mask = np.ones(pixels.shape[:2], dtype=bool)
    lap = (4.0 * pixels
           - np.roll(pixels, 1, axis=0) - np.roll(pixels, -1, axis=0)
           - np.roll(pixels, 1, axis=1) - np.roll(pixels, -1, axis=1))
    values = lap[mask]
    if values.size == 0:
        return 0.0
    return float(values.var())


@dataclass
class MetricReport:
    fid: float | None = None
    fid_regularized: bool = False
    kid_x1000: float | None = None
    clip_score: float | None = None
    seam: float | None = None
    hf_energy: float | None = None
    real_count: int = 0
    fake_count: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fid": self.fid, "fid_regularized": self.fid_regularized,
            "kid_x1000": self.kid_x1000, "clip_score": self.clip_score,
            "seam": self.seam, "hf_energy": self.hf_energy,
            "real_count": self.real_count, "fake_count": self.fake_count,
            "notes": list(self.notes),
        }


def feature_set(extractor: FeatureExtractor, images) -> np.ndarray:
    feats = [extractor.extract(img) for img in images]
    if not feats:
        raise ContractError("empty image set")
    return np.stack(feats)


def report_from_feature_sets(real_features: np.ndarray, fake_features: np.ndarray,
                             kid_subset: int = 100, kid_subsets: int = 100,
                             seed: int = 0) -> MetricReport:
    """FID/KID block of a report; KID is reported in the x10^-3 convention."""
    subset = min(kid_subset, len(real_features), len(fake_features))
    value, regularized = _fid_with_info(real_features, fake_features)
    report = MetricReport(
        fid=value, fid_regularized=regularized,
        kid_x1000=1000.0 * kid(real_features, fake_features, subset,
                               kid_subsets, seed),
        real_count=len(real_features), fake_count=len(fake_features),
    )
    if regularized:
        report.notes.append("fid covariance regularized with eps*I")
    return report
