"""PFM and PNG readers/writers."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .core import InvalidImage, normalize_intensities


class PFMError(InvalidImage):
    pass


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 array, top row first.

    Returns ``(H, W)`` for ``Pf`` and ``(H, W, 3)`` for ``PF`` files.
    """
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise PFMError(f"{path}: not a PFM file (header {header[:8]!r})")
        try:
            dims = fh.readline().split()
            width, height = int(dims[0]), int(dims[1])
            scale = float(fh.readline().strip())
        except (ValueError, IndexError) as exc:
            raise PFMError(f"{path}: malformed PFM header") from exc
        if width <= 0 or height <= 0 or scale == 0:
            raise PFMError(f"{path}: malformed PFM header")
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise PFMError(f"{path}: truncated PFM data")
    data = np.frombuffer(raw, dtype=dtype)
    shape = (height, width, 3) if channels == 3 else (height, width)
    # rows are stored bottom-up
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_pfm(path, image: np.ndarray) -> None:
    """Write a little-endian PFM (bottom-up rows, negative scale)."""
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        header = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        header = b"PF"
    else:
        raise PFMError(f"cannot store array of shape {img.shape} as PFM")
    height, width = img.shape[:2]
    data = np.ascontiguousarray(np.flipud(img), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{width} {height}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(data.tobytes())


def read_png(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG, normalised to ``[0, 1]``."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            raw = np.asarray(im, dtype=np.float64)
            return normalize_intensities(raw, 16)
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        raw = np.asarray(im, dtype=np.float64)
    return normalize_intensities(raw, 8)


def write_png(path, image: np.ndarray, bit_depth: int = 8) -> None:
    """Quantise a ``[0, 1]`` image to PNG.  16-bit output is grayscale only."""
    img = np.clip(np.nan_to_num(np.asarray(image, dtype=np.float64)), 0.0, 1.0)
    if bit_depth == 16:
        if img.ndim == 3:
            img = img.mean(axis=2)
        q = np.round(img * 65535).astype(np.uint16)
        Image.fromarray(q).save(path)
    elif bit_depth == 8:
        q = np.round(img * 255).astype(np.uint8)
        Image.fromarray(q).save(path)
    else:
        raise ValueError("bit_depth must be 8 or 16")


def read_image(path) -> np.ndarray:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    return read_png(path)

