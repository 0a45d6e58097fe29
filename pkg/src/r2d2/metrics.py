"""Region-of-interest image quality metrics: SNR and CNR over circular ROIs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_KINDS = ("signal", "background")


@dataclass(frozen=True)
class RoiSpec:
    """Circular region: center (row, col), radius in pixels, and role."""

    center: tuple[float, float]
    radius: float
    kind: str = "signal"

    def __post_init__(self):
        if self.radius < 1.0:
            raise ValueError(f"radius must be >= 1 pixel, got {self.radius}")
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")


def roi_from_json(obj: dict) -> RoiSpec:
    return RoiSpec(
        center=(float(obj["center"][0]), float(obj["center"][1])),
        radius=float(obj["radius"]),
        kind=str(obj.get("kind", "signal")),
    )


def roi_to_json(roi: RoiSpec) -> dict:
    return {"center": [roi.center[0], roi.center[1]], "radius": roi.radius, "kind": roi.kind}


def circular_mask(shape: tuple[int, int], roi: RoiSpec) -> np.ndarray:
    """Boolean disk (r - cr)^2 + (c - cc)^2 <= radius^2 over the pixel lattice.

    Errors if any lattice point inside the disk falls outside the image, so a
    valid ROI never silently loses pixels to the border.
    """
    rows, cols = shape
    cr, cc = roi.center
    # Evaluate on a lattice padded past the disk extent to detect border hits.
    pad = int(np.ceil(roi.radius)) + 1
    rr, cc_grid = np.mgrid[-pad : rows + pad, -pad : cols + pad]
    inside = (rr - cr) ** 2 + (cc_grid - cc) ** 2 <= roi.radius**2
    in_image = (rr >= 0) & (rr < rows) & (cc_grid >= 0) & (cc_grid < cols)
    if np.any(inside & ~in_image):
        raise ValueError(
            f"ROI center={roi.center} radius={roi.radius} crosses the border of a "
            f"{rows}x{cols} image"
        )
    return inside[pad : pad + rows, pad : pad + cols]


def _roi_values(img: np.ndarray, roi: RoiSpec) -> np.ndarray:
    return img[circular_mask(img.shape, roi)]


def snr(img: np.ndarray, roi: RoiSpec, sample_std: bool = False) -> float:
    """mean / std over the ROI; population std unless sample_std is set."""
    vals = _roi_values(img, roi)
    std = float(np.std(vals, ddof=1 if sample_std else 0))
    if std == 0.0:
        raise ValueError("ROI has zero variance, SNR undefined")
    return float(np.mean(vals)) / std


def cnr(
    img: np.ndarray,
    signal_roi: RoiSpec,
    background_roi: RoiSpec,
    paired: bool = False,
    sample_std: bool = False,
) -> float:
    """|mean_s - mean_b| / std_b, or with paired set the elementwise form
    mean(|x_s - x_b|) / std_b over raster-ordered pixels (equal counts only)."""
    s = _roi_values(img, signal_roi)
    b = _roi_values(img, background_roi)
    std_b = float(np.std(b, ddof=1 if sample_std else 0))
    if std_b == 0.0:
        raise ValueError("background ROI has zero variance, CNR undefined")
    if paired:
        if s.size != b.size:
            raise ValueError(f"paired CNR needs equal ROI sizes, got {s.size} and {b.size}")
        return float(np.mean(np.abs(s - b))) / std_b
    return abs(float(np.mean(s)) - float(np.mean(b))) / std_b
