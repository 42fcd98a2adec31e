"""Evaluation metrics and the bucketed report protocol.

mean l1 / PSNR / SSIM are pairwise on [0,1] images; FID compares Gaussian
fits of embedding sets from a pluggable feature extractor. Results are
accumulated per mask-ratio bucket into a Table-shaped report.
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.signal import fftconvolve

from .data import load_unit_image
from .errors import ConfigurationError, DomainError
from .masks import MaskBucket, bucket_for_ratio, load_mask, mask_ratio

BUCKET_KEYS = ("B0_20", "B20_40", "B40_60")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

EIG_WARN = 1e-6


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DomainError(f"image shapes disagree: {a.shape} vs {b.shape}")
    for name, x in (("result", a), ("truth", b)):
        if x.min() < -1e-6 or x.max() > 1 + 1e-6:
            raise DomainError(
                f"{name} image outside [0,1]: range [{x.min():.4f}, {x.max():.4f}]"
            )


def mean_l1(result: np.ndarray, truth: np.ndarray) -> float:
    _check_pair(result, truth)
    return float(np.abs(result - truth).mean())


def psnr(result: np.ndarray, truth: np.ndarray) -> float:
    _check_pair(result, truth)
    mse = float(((result - truth) ** 2).mean())
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    # valid-mode windows only: no padded borders
    mu_x = fftconvolve(x, window, mode="valid")
    mu_y = fftconvolve(y, window, mode="valid")
    xx = fftconvolve(x * x, window, mode="valid") - mu_x * mu_x
    yy = fftconvolve(y * y, window, mode="valid") - mu_y * mu_y
    xy = fftconvolve(x * y, window, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (xx + yy + SSIM_C2)
    return float((num / den).mean())


def ssim(result: np.ndarray, truth: np.ndarray) -> float:
    _check_pair(result, truth)
    if result.ndim == 2:
        result = result[None]
        truth = truth[None]
    if result.ndim != 3:
        raise DomainError(f"ssim expects (C,H,W) or (H,W), got {result.shape}")
    h, w = result.shape[-2:]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DomainError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )
    window = _gaussian_window()
    vals = [
        _ssim_channel(result[c].astype(np.float64), truth[c].astype(np.float64), window)
        for c in range(result.shape[0])
    ]
    return float(np.mean(vals))


def _sqrtm_psd(sigma: np.ndarray, label: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sigma)
    if vals.min() < -EIG_WARN:
        warnings.warn(
            f"clipping negative eigenvalue {vals.min():.3e} in {label}", RuntimeWarning
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(stats_a, stats_b) -> float:
    """Frechet distance between two Gaussian fits (mu, sigma)."""
    mu_a, sig_a = (np.asarray(s, dtype=np.float64) for s in stats_a)
    mu_b, sig_b = (np.asarray(s, dtype=np.float64) for s in stats_b)
    if mu_a.shape != mu_b.shape or sig_a.shape != sig_b.shape:
        raise DomainError(
            f"stats dimensions disagree: {mu_a.shape}/{sig_a.shape} vs "
            f"{mu_b.shape}/{sig_b.shape}"
        )
    if sig_a.shape != (mu_a.size, mu_a.size):
        raise DomainError(f"covariance shape {sig_a.shape} does not match mean {mu_a.shape}")
    sig_a = (sig_a + sig_a.T) / 2.0
    sig_b = (sig_b + sig_b.T) / 2.0
    root_a = _sqrtm_psd(sig_a, "covariance A")
    inner = root_a @ sig_b @ root_a
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < -EIG_WARN:
        warnings.warn(
            f"clipping negative eigenvalue {vals.min():.3e} in sqrt(A B A)",
            RuntimeWarning,
        )
    vals = np.clip(vals, 0.0, None)
    # rank cutoff: eigenvalues below float resolution of the product are
    # noise, and sqrt would amplify them from O(eps) to O(sqrt(eps))
    if vals.size:
        vals[vals < vals.max() * vals.size * np.finfo(np.float64).eps] = 0.0
    tr_covmean = float(np.sqrt(vals).sum())
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(sig_a) + np.trace(sig_b) - 2.0 * tr_covmean)


# ---------------------------------------------------------------------------
# feature extractors
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class FeatureExtractorHandle:
    identifier: str
    embedding_dim: int
    weights_path: Optional[str] = None

    def __post_init__(self):
        if self.embedding_dim < 2:
            raise ConfigurationError("embedding_dim must be >= 2")


class RandomConvExtractor:
    """Small frozen conv net with a fixed seed; used where pretrained
    weights are unavailable. FID's formula does not care which features."""

    def __init__(self, embedding_dim: int = 16, seed: int = 0):
        self.handle = FeatureExtractorHandle("random-conv", embedding_dim)
        gen = torch.Generator().manual_seed(seed)
        self._w1 = torch.empty(8, 3, 3, 3).normal_(0, 0.4, generator=gen)
        self._w2 = torch.empty(embedding_dim, 8, 3, 3).normal_(0, 0.4, generator=gen)

    def embed(self, images: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        if x.dim() != 4 or x.shape[1] != 3:
            raise DomainError(f"extractor expects (N,3,H,W), got {tuple(x.shape)}")
        with torch.no_grad():
            h = torch.relu(torch.nn.functional.conv2d(x, self._w1, stride=2, padding=1))
            h = torch.relu(torch.nn.functional.conv2d(h, self._w2, stride=2, padding=1))
            emb = h.mean(dim=(2, 3))
        return emb.double().numpy()


class InceptionV3Extractor:
    """Canonical 2048-dim pool features from a user-supplied weights file."""

    def __init__(self, weights_path: str):
        if not weights_path or not os.path.isfile(weights_path):
            raise ConfigurationError(
                f"inception weights file not found: {weights_path!r}"
            )
        import torchvision

        net = torchvision.models.inception_v3(
            weights=None, aux_logits=True, init_weights=False
        )
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        net.fc = torch.nn.Identity()
        net.eval()
        self._net = net
        self.handle = FeatureExtractorHandle("inception-v3", 2048, weights_path)

    def embed(self, images: np.ndarray) -> np.ndarray:
        x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        if x.dim() != 4 or x.shape[1] != 3:
            raise DomainError(f"extractor expects (N,3,H,W), got {tuple(x.shape)}")
        with torch.no_grad():
            x = torch.nn.functional.interpolate(
                x, size=(299, 299), mode="bilinear", align_corners=False
            )
            x = x * 2.0 - 1.0
            emb = self._net(x)
        return emb.double().numpy()


def build_extractor(name: str, weights_path: Optional[str] = None):
    if name == "random-conv":
        return RandomConvExtractor()
    if name == "inception-v3":
        return InceptionV3Extractor(weights_path)
    raise ConfigurationError(f"unknown extractor {name!r}")


def extract_statistics(images, extractor) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance of the extractor's embeddings."""
    arr = np.stack([np.asarray(im, dtype=np.float64) for im in images])
    if arr.shape[0] < 2:
        raise DomainError(
            f"insufficient samples: covariance needs >= 2 images, got {arr.shape[0]}"
        )
    emb = extractor.embed(arr)
    mu = emb.mean(axis=0)
    sigma = np.atleast_2d(np.cov(emb, rowvar=False, ddof=1))
    return mu, sigma


# ---------------------------------------------------------------------------
# bucketed evaluation protocol
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class BucketMetrics:
    mean_l1: Optional[float]
    psnr: Optional[float]
    ssim: Optional[float]
    fid: Optional[float]
    n_images: int


@dataclasses.dataclass
class MetricsReport:
    buckets: dict
    skipped: list

    def to_json_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return {
            key: {
                "mean_l1": enc(bm.mean_l1),
                "psnr": enc(bm.psnr),
                "ssim": enc(bm.ssim),
                "fid": enc(bm.fid),
                "n_images": bm.n_images,
            }
            for key, bm in self.buckets.items()
        }

    def render_table(self) -> str:
        def fmt(v):
            if v is None:
                return "--"
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return f"{v:.4f}"

        rows = [("metric", *BUCKET_KEYS)]
        for name in ("mean_l1", "psnr", "ssim", "fid"):
            rows.append(
                (name, *[fmt(getattr(self.buckets[k], name)) for k in BUCKET_KEYS])
            )
        rows.append(("n_images", *[str(self.buckets[k].n_images) for k in BUCKET_KEYS]))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows
        ]
        return "\n".join(lines)


def evaluate(
    results_dir: str,
    truth_dir: str,
    masks_dir: str,
    extractor=None,
    mask_invert: bool = False,
) -> MetricsReport:
    """Filename-aligned triple evaluation with per-bucket accumulation."""
    for d in (results_dir, truth_dir, masks_dir):
        if not os.path.isdir(d):
            raise ConfigurationError(f"not a directory: {d}")

    def names(d):
        return {f for f in os.listdir(d) if f.lower().endswith(".png")}

    res_names = names(results_dir)
    truth_names = names(truth_dir)
    mask_names = names(masks_dir)
    common = sorted(res_names & truth_names & mask_names)
    skipped = []
    for n in sorted(res_names | truth_names | mask_names):
        if n not in common:
            missing = [
                label
                for label, group in (
                    ("results", res_names),
                    ("truth", truth_names),
                    ("masks", mask_names),
                )
                if n not in group
            ]
            skipped.append({"file": n, "reason": f"missing in {', '.join(missing)}"})

    acc = {
        key: {"l1": [], "psnr": [], "ssim": [], "res": [], "tru": []}
        for key in BUCKET_KEYS
    }
    for name in common:
        m = load_mask(os.path.join(masks_dir, name), invert=mask_invert)
        bucket = bucket_for_ratio(mask_ratio(m))
        if bucket is MaskBucket.OUT_OF_RANGE:
            skipped.append({"file": name, "reason": "mask ratio above 0.6"})
            continue
        res = load_unit_image(os.path.join(results_dir, name))
        tru = load_unit_image(os.path.join(truth_dir, name))
        slot = acc[bucket.value]
        slot["l1"].append(mean_l1(res, tru))
        slot["psnr"].append(psnr(res, tru))
        slot["ssim"].append(ssim(res, tru))
        slot["res"].append(res)
        slot["tru"].append(tru)

    buckets = {}
    for key in BUCKET_KEYS:
        slot = acc[key]
        n = len(slot["l1"])
        if n == 0:
            buckets[key] = BucketMetrics(None, None, None, None, 0)
            continue
        fid_val = None
        if extractor is not None and n >= 2:
            fid_val = fid(
                extract_statistics(slot["res"], extractor),
                extract_statistics(slot["tru"], extractor),
            )
        buckets[key] = BucketMetrics(
            mean_l1=float(np.mean(slot["l1"])),
            psnr=float(np.mean(slot["psnr"])),
            ssim=float(np.mean(slot["ssim"])),
            fid=fid_val,
            n_images=n,
        )
    return MetricsReport(buckets=buckets, skipped=skipped)
