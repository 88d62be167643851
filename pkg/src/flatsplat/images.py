"""8-bit RGB image IO (PNG and binary PPM) mapped to float arrays in [0, 1].

Images are (H, W, 3) float64 arrays; loading divides by 255, saving rounds
back and clamps. Anything that is not 8-bit three-channel RGB is rejected.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Unsupported container, bit depth or channel layout."""


def hflip(image):
    """Mirror horizontally: out[y, x] = in[y, W-1-x]. Involution."""
    return np.ascontiguousarray(np.asarray(image)[:, ::-1, :])


def image_from_bytes_u8(data, height, width):
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64) / 255.0


def image_to_u8(image):
    image = np.asarray(image, dtype=np.float64)
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def _load_ppm(path):
    data = Path(path).read_bytes()
    # P6, optional comments, width height maxval, single whitespace, raster.
    m = re.match(rb"^(P\d)\s", data)
    if not m or m.group(1) != b"P6":
        raise ImageFormatError(f"{path}: not a binary RGB PPM (P6)")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    raster = data[pos:pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise ImageFormatError(f"{path}: truncated raster")
    return image_from_bytes_u8(raster, height, width)


def _save_ppm(image, path):
    u8 = image_to_u8(image)
    h, w = u8.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(u8.tobytes())


def image_load(path):
    """Load a PNG or binary PPM file as an (H, W, 3) array in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        return _load_ppm(path)
    try:
        img = Image.open(path)
    except Exception as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})")
    if img.mode != "RGB":
        raise ImageFormatError(
            f"{path}: unsupported mode {img.mode!r}; need 8-bit RGB")
    arr = np.asarray(img, dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def image_save(image, path):
    """Quantize to 8-bit (round, clamp) and write PNG or PPM by suffix."""
    path = Path(path)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3) array, got {image.shape}")
    if path.suffix.lower() in (".ppm", ".pnm"):
        _save_ppm(image, path)
        return
    Image.fromarray(image_to_u8(image), mode="RGB").save(path, format="PNG")


def image_png_bytes(image):
    """Encode as PNG in memory (deterministic for identical input)."""
    import io

    buf = io.BytesIO()
    Image.fromarray(image_to_u8(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
