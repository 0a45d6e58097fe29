"""Seeded piecewise-smooth test phantoms: a smooth intensity ramp plus random
constant ellipses, with ROI placement kept clear of the background corner."""

from __future__ import annotations

import numpy as np

from .metrics import RoiSpec


def _ellipse(u: np.ndarray, v: np.ndarray, cu, cv, au, av, angle) -> np.ndarray:
    du, dv = u - cu, v - cv
    ca, sa = np.cos(angle), np.sin(angle)
    ru = ca * du + sa * dv
    rv = -sa * du + ca * dv
    return (ru / au) ** 2 + (rv / av) ** 2 <= 1.0


def make_phantom_with_rois(size: int = 128, seed: int = 0):
    """Phantom plus suggested ROIs: a signal disk inside the large central
    ellipse and a background disk in the untouched top-left corner."""
    rng = np.random.default_rng(seed)
    ax = np.linspace(-1.0, 1.0, size)
    v, u = np.meshgrid(ax, ax)  # u: rows, v: cols

    a, b, c = rng.uniform(-0.08, 0.08, size=3)
    img = 0.18 + a * u + b * v + c * u * v

    # large ellipse hosting the signal ROI (the disk fits inside both axes)
    cu, cv = rng.uniform(0.05, 0.25, size=2)
    au, av = rng.uniform(0.42, 0.58, size=2)
    img = np.where(_ellipse(u, v, cu, cv, au, av, rng.uniform(0, np.pi)), img + 0.45, img)

    center_px = int(round((cu + 1.0) / 2.0 * (size - 1)))
    center_py = int(round((cv + 1.0) / 2.0 * (size - 1)))
    rois = {
        "signal": RoiSpec(center=(center_px, center_py), radius=max(3, size // 13), kind="signal"),
        "background": RoiSpec(
            center=(size // 9, size // 9), radius=max(3, size // 16), kind="background"
        ),
    }
    rr, cc = np.mgrid[0:size, 0:size]
    protected = [
        (rr - roi.center[0]) ** 2 + (cc - roi.center[1]) ** 2 <= roi.radius**2
        for roi in rois.values()
    ]

    # smaller structures; edges must not cross the ROI disks, so each disk
    # stays flat (covered entirely or not at all)
    for _ in range(rng.integers(2, 5)):
        delta = rng.uniform(0.08, 0.28) * rng.choice([-1.0, 1.0])
        for _attempt in range(20):
            ecu, ecv = rng.uniform(-0.1, 0.65, size=2)
            eau, eav = rng.uniform(0.06, 0.45, size=2)
            mask = _ellipse(u, v, ecu, ecv, eau, eav, rng.uniform(0, np.pi))
            if all(mask[p].all() or not mask[p].any() for p in protected):
                img = np.where(mask, img + delta, img)
                break

    img = np.clip(img, 0.02, 0.98)
    return img, rois


def make_phantom(size: int = 128, seed: int = 0) -> np.ndarray:
    return make_phantom_with_rois(size, seed)[0]
