"""Data-consistency operators: low-frequency spectral regularization and the
block-average downsample/upsample projection used by super-resolution.

Both maps are non-expansive: the spectral mix is (1 - lambda)-Lipschitz in the
current iterate and (I - P) is an orthogonal-projection complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _axis_mask(n: int, omega_fraction: float) -> np.ndarray:
    m = max(1, round(omega_fraction * n))
    if m >= n:
        return np.ones(n, dtype=bool)
    if m % 2 == 0:
        m -= 1  # odd count keeps the window symmetric about DC
    half = (m - 1) // 2
    freq = np.fft.fftfreq(n, d=1.0 / n)  # integer frequencies, unshifted order
    return np.abs(freq) <= half


def build_lowfreq_mask(shape: tuple[int, int], omega_fraction: float) -> np.ndarray:
    """Boolean DFT mask keeping a centered rectangle of low frequencies.

    Per axis of length n about omega_fraction * n bins are kept, always an odd
    count centered on DC so the mask is conjugate-symmetric; the Nyquist bin
    of an even axis enters only when the whole axis is kept.
    """
    if not 0.0 < omega_fraction <= 1.0:
        raise ValueError(f"omega_fraction must be in (0, 1], got {omega_fraction}")
    rows, cols = shape
    if rows < 1 or cols < 1:
        raise ValueError(f"bad mask shape {shape}")
    return np.outer(_axis_mask(rows, omega_fraction), _axis_mask(cols, omega_fraction))


def lowpass(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """F^-1 (mask * F x); the imaginary residue of the inverse transform is
    discarded (the symmetric mask keeps it at rounding level)."""
    if x.shape != mask.shape:
        raise ValueError(f"x shape {x.shape} != mask shape {mask.shape}")
    return np.fft.ifft2(np.fft.fft2(x) * mask).real


def lowfreq_mix(x_cur: np.ndarray, x_ref: np.ndarray, lam: float, mask: np.ndarray) -> np.ndarray:
    """lambda * lowpass(x_ref) + (1 - lambda) * x_cur.

    Pulls every iterate toward the measured low-frequency spectrum; the map is
    (1 - lambda)-Lipschitz in x_cur, so the reverse process stays contractive.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if x_cur.shape != x_ref.shape:
        raise ValueError(f"x_cur shape {x_cur.shape} != x_ref shape {x_ref.shape}")
    if lam == 0.0:
        return x_cur
    return lam * lowpass(x_ref, mask) + (1.0 - lam) * x_cur


@dataclass(frozen=True)
class SrOperator:
    """Block-average downsample by an integer factor and nearest-neighbor
    upsample back; up(down(x)) is the orthogonal projection onto images that
    are constant on factor x factor blocks."""

    factor: int

    def __post_init__(self):
        if not (isinstance(self.factor, int) and self.factor >= 1):
            raise ValueError(f"factor must be an integer >= 1, got {self.factor}")

    def validate(self, shape: tuple[int, int]):
        rows, cols = shape
        if rows % self.factor or cols % self.factor:
            raise ValueError(f"shape {shape} not divisible by factor {self.factor}")

    def down(self, x: np.ndarray) -> np.ndarray:
        self.validate(x.shape)
        d = self.factor
        return x.reshape(x.shape[0] // d, d, x.shape[1] // d, d).mean(axis=(1, 3))

    def up(self, y: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(y, self.factor, axis=0), self.factor, axis=1)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.up(self.down(x))


def downup_project(x: np.ndarray, factor: int) -> np.ndarray:
    """Convenience wrapper for SrOperator(factor).project(x)."""
    return SrOperator(factor).project(x)


def sr_data_consistency(
    x_prime: np.ndarray, x0: np.ndarray, op: SrOperator, strict_literal: bool = False
) -> np.ndarray:
    """Replace the block-mean component of the iterate with the measurement:
    (I - P) x' + P x0.  strict_literal swaps the last term for the raw x0,
    which is only a projection when x0 is itself block-constant."""
    if x_prime.shape != x0.shape:
        raise ValueError(f"x' shape {x_prime.shape} != x0 shape {x0.shape}")
    op.validate(x_prime.shape)
    residual = x_prime - op.project(x_prime)
    if strict_literal:
        return residual + x0
    return residual + op.project(x0)
