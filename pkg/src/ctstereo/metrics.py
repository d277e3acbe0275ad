"""Normal and depth error measures."""

from __future__ import annotations

import numpy as np

from .core import DimensionError, EmptyDomain


def _mask(mask, shape):
    m = np.ones(shape, bool) if mask is None else np.asarray(mask, bool)
    if m.shape != shape:
        raise DimensionError(f"mask shape {m.shape} does not match {shape}")
    if not m.any():
        raise EmptyDomain("empty evaluation mask")
    return m


def angular_error(est, gt) -> np.ndarray:
    """Per-pixel angle between normal fields in degrees.

    Uses ``atan2(|a x b|, a . b)``: equal to ``arccos`` of the clamped dot
    product for unit vectors, but exact for identical or opposite vectors
    stored in single precision.
    """
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape or est.shape[-1] != 3:
        raise DimensionError(f"normal fields differ: {est.shape} vs {gt.shape}")
    s = np.linalg.norm(np.cross(est, gt), axis=-1)
    c = np.sum(est * gt, axis=-1)
    return np.degrees(np.arctan2(s, c))


def maen(est, gt, mask=None) -> float:
    """Mean angular error of normals in degrees over ``mask``."""
    err = angular_error(est, gt)
    m = _mask(mask, err.shape)
    return float(np.mean(err[m]))


def msed(est, gt, mask=None, align: str = "mean") -> float:
    """Mean squared depth error; ``align="mean"`` removes each field's offset."""
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise DimensionError(f"depth fields differ: {est.shape} vs {gt.shape}")
    m = _mask(mask, est.shape)
    d = est[m] - gt[m]
    if align == "mean":
        d = d - d.mean()
    elif align != "none":
        raise ValueError(f"align must be 'mean' or 'none', got {align!r}")
    return float(np.mean(d * d))
