"""Deterministic synthetic 128x128 test images ("smoke corpus").

Three images with distinct palettes and structure: soft blobs on a radial
gradient, a plaid with hard-edged shapes, and smooth pseudo-terrain with a
polygon. Band-limited enough that a few thousand splats can fit them well,
yet different enough pairwise that cross-image PSNR stays low.
"""

import numpy as np


def _grid(size):
    y, x = np.mgrid[0:size, 0:size]
    return (x + 0.5) / size, (y + 0.5) / size


def blobs_image(size=128):
    x, y = _grid(size)
    r = np.sqrt((x - 0.5) ** 2 + (y - 0.5) ** 2)
    img = np.zeros((size, size, 3))
    img[..., 0] = 0.35 + 0.3 * (1 - r)
    img[..., 1] = 0.25 + 0.2 * (1 - r)
    img[..., 2] = 0.5 - 0.25 * (1 - r)
    blobs = [(0.3, 0.35, 0.16, (0.9, 0.25, 0.2)),
             (0.7, 0.3, 0.12, (0.2, 0.8, 0.3)),
             (0.6, 0.72, 0.2, (0.95, 0.8, 0.2)),
             (0.25, 0.75, 0.1, (0.3, 0.4, 0.9))]
    for cx, cy, rad, color in blobs:
        d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
        w = np.clip(1.0 - (d / rad) ** 2, 0, 1) ** 1.5
        img = img * (1 - w[..., None]) + w[..., None] * np.asarray(color)
    return np.clip(img, 0.02, 0.98)


def plaid_image(size=128):
    x, y = _grid(size)
    img = np.zeros((size, size, 3))
    img[..., 0] = 0.5 + 0.22 * np.sin(2 * np.pi * 3 * x)
    img[..., 1] = 0.5 + 0.22 * np.sin(2 * np.pi * 2.5 * y + 0.7)
    img[..., 2] = 0.45 + 0.18 * np.sin(2 * np.pi * (1.5 * x + 2 * y))
    u = (x - 0.52) * np.cos(0.5) + (y - 0.45) * np.sin(0.5)
    v = -(x - 0.52) * np.sin(0.5) + (y - 0.45) * np.cos(0.5)
    square = (np.abs(u) < 0.17) & (np.abs(v) < 0.17)
    img[square] = [0.85, 0.3, 0.5]
    ring = np.abs(np.sqrt((x - 0.25) ** 2 + (y - 0.72) ** 2) - 0.14) < 0.035
    img[ring] = [0.15, 0.7, 0.75]
    return np.clip(img, 0.02, 0.98)


def terrain_image(size=128):
    x, y = _grid(size)
    h = (0.5 * np.sin(2 * np.pi * (1.1 * x + 0.3))
         + 0.3 * np.sin(2 * np.pi * (2.3 * y + 0.1))
         + 0.25 * np.sin(2 * np.pi * (1.7 * x + 2.1 * y))
         + 0.15 * np.sin(2 * np.pi * (3.9 * x - 1.3 * y)))
    h = (h - h.min()) / (h.max() - h.min())
    img = np.zeros((size, size, 3))
    img[..., 0] = 0.2 + 0.55 * h
    img[..., 1] = 0.35 + 0.35 * (1 - h)
    img[..., 2] = 0.3 + 0.3 * np.abs(h - 0.5) * 2
    tri = (y > 0.55) & (y - 0.55 > 1.8 * np.abs(x - 0.48)) & (y < 0.92)
    img[tri] = [0.75, 0.68, 0.6]
    return np.clip(img, 0.02, 0.98)


def smoke_corpus(size=128):
    return {"blobs": blobs_image(size), "plaid": plaid_image(size),
            "terrain": terrain_image(size)}
