"""Loss components and evaluation metrics: L1, SSIM/D-SSIM, MS-SSIM, PSNR.

All functions take (H, W, 3) float arrays in [0, 1]. SSIM uses an 11x11
Gaussian window (sigma 1.5, K1=0.01, K2=0.03, dynamic range 1) evaluated on
valid windows only, averaged over channels; its gradient with respect to the
first image is analytic (the exact adjoint of the windowing), which is what
the trainer differentiates through.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03
_C1, _C2 = _K1 ** 2, _K2 ** 2
_PSNR_CAP_DB = 100.0

MS_SSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])


def _gauss_kernel():
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return k / k.sum()

_KERNEL = _gauss_kernel()
_PAD = SSIM_WINDOW // 2


def _check_shapes(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) images, got {a.shape}")
    return a, b


def _filt(x):
    """Separable Gaussian windowing restricted to valid pixels."""
    out = correlate1d(x, _KERNEL, axis=0, mode="constant")
    out = correlate1d(out, _KERNEL, axis=1, mode="constant")
    return out[_PAD:-_PAD, _PAD:-_PAD]

def _filt_adjoint(g, shape):
    """Exact adjoint of _filt: scatter the valid map back to image size."""
    full = np.zeros(shape, dtype=np.float64)
    full[_PAD:-_PAD, _PAD:-_PAD] = g
    full = correlate1d(full, _KERNEL, axis=0, mode="constant")
    full = correlate1d(full, _KERNEL, axis=1, mode="constant")
    return full


def l1(a, b):
    """Mean absolute error and its subgradient w.r.t. a (0 at equality)."""
    a, b = _check_shapes(a, b)
    diff = a - b
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return value, grad


def _ssim_maps(a, b):
    mu1, mu2 = _filt(a), _filt(b)
    s11 = _filt(a * a) - mu1 ** 2
    s22 = _filt(b * b) - mu2 ** 2
    s12 = _filt(a * b) - mu1 * mu2
    lum_num = 2 * mu1 * mu2 + _C1
    lum_den = mu1 ** 2 + mu2 ** 2 + _C1
    cs_num = 2 * s12 + _C2
    cs_den = s11 + s22 + _C2
    lum = lum_num / lum_den
    cs = cs_num / cs_den
    return mu1, mu2, lum_num, lum_den, cs_num, cs_den, lum, cs


def ssim(a, b):
    """Structural similarity in [-1, 1] and its analytic gradient w.r.t. a."""
    a, b = _check_shapes(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"image smaller than the {SSIM_WINDOW}px SSIM window: {a.shape}")
    mu1, mu2, lum_num, lum_den, cs_num, cs_den, lum, cs = _ssim_maps(a, b)
    smap = lum * cs
    value = float(np.mean(smap))

    count = smap.size
    # Partials of the map w.r.t. mu1, s11, s12 (s22/mu2 belong to b).
    d_mu1 = cs * 2 * (mu2 * lum_den - mu1 * lum_num) / lum_den ** 2
    d_s11 = -lum * cs / cs_den
    d_s12 = lum * 2 / cs_den
    # s11 = filt(a^2) - mu1^2, s12 = filt(a*b) - mu1*mu2
    c_mu = d_mu1 - 2 * mu1 * d_s11 - mu2 * d_s12
    grad = (_filt_adjoint(c_mu, a.shape)
            + 2 * a * _filt_adjoint(d_s11, a.shape)
            + b * _filt_adjoint(d_s12, a.shape)) / count
    return value, grad


def dssim(a, b):
    """Structural dissimilarity (1 - SSIM) / 2 and gradient w.r.t. a."""
    value, grad = ssim(a, b)
    return (1.0 - value) / 2.0, -grad / 2.0


def _downsample2(x):
    h, w = x.shape[:2]
    h2, w2 = h // 2, w // 2
    x = x[: 2 * h2, : 2 * w2]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b):
    """Multi-scale SSIM in [0, 1] (5 dyadic scales, fewer on small images).

    Scales that would shrink below the 11px window are dropped from the
    coarse end and the remaining weights renormalized to sum to 1.
    """
    a, b = _check_shapes(a, b)
    side = min(a.shape[0], a.shape[1])
    n_scales = 0
    while n_scales < len(MS_SSIM_WEIGHTS) and side // (2 ** n_scales) >= SSIM_WINDOW:
        n_scales += 1
    if n_scales == 0:
        raise ValueError(f"image smaller than the SSIM window: {a.shape}")
    weights = MS_SSIM_WEIGHTS[:n_scales] / MS_SSIM_WEIGHTS[:n_scales].sum()

    value = 1.0
    for level in range(n_scales):
        _, _, _, _, cs_num, cs_den, lum, cs = _ssim_maps(a, b)
        if level == n_scales - 1:
            term = float(np.mean(lum * cs))
        else:
            term = float(np.mean(cs))
            a, b = _downsample2(a), _downsample2(b)
        value *= max(term, 0.0) ** weights[level]
    return float(np.clip(value, 0.0, 1.0))


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for unit dynamic range, capped at 100."""
    a, b = _check_shapes(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return _PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), _PSNR_CAP_DB)


@dataclass
class MetricReport:
    psnr: float
    ms_ssim: float
    l1: float

    def to_dict(self):
        return {"psnr": float(self.psnr), "ms_ssim": float(self.ms_ssim),
                "l1": float(self.l1)}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def compute(cls, rendered, target):
        return cls(psnr=psnr(rendered, target), ms_ssim=ms_ssim(rendered, target),
                   l1=l1(rendered, target)[0])
