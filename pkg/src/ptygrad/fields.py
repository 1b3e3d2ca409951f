"""Complex 2D field arithmetic, centered unitary DFTs, pupil construction, sampling operators.

Conventions used throughout the package:

* Spatial arrays are indexed ``[row, col]`` with the origin at index ``(0, 0)``.
* Spectra are centered: the zero-frequency bin sits at index ``(side // 2, side // 2)``.
* Both transform directions are unitary, so Parseval holds with unit factor.
* ``circular_convolve`` is the plain cyclic convolution with origin at index
  ``(0, 0)`` (delta at the origin is the identity kernel).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError, OutOfBandError


def _check_square(x: np.ndarray) -> int:
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 2:
        raise DimensionError(f"expected square 2D array with side >= 2, got shape {x.shape}")
    return x.shape[0]


@dataclass(frozen=True)
class OpticsConfig:
    """Geometry of the simulated microscope.

    Wave vectors are stored as sines of the illumination angles (fractions of
    k0 = 2*pi/lambda), so a wave vector of magnitude ``na`` sits exactly at the
    pupil edge.
    """

    lambda_um: float
    na: float
    n_high: int
    stride: int
    px_high: float
    wavevectors: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_high < 2 or self.stride < 1 or self.n_high % self.stride != 0:
            raise DomainError(
                f"n_high={self.n_high} must be >= 2 and divisible by stride={self.stride}"
            )
        if not (0.0 < self.na < 1.0):
            raise DomainError(f"na={self.na} out of (0, 1)")
        if self.lambda_um <= 0 or self.px_high <= 0:
            raise DomainError("lambda_um and px_high must be positive")
        for kx, ky in self.wavevectors:
            if abs(kx) >= 1.0 or abs(ky) >= 1.0:
                raise DomainError(f"wave vector ({kx}, {ky}) not a valid direction sine")
        if self.ctf_radius_bins >= self.n_high / 2:
            raise DomainError("pupil does not fit inside the sampled spectrum")
        object.__setattr__(self, "wavevectors", tuple(map(tuple, self.wavevectors)))

    @property
    def m_side(self) -> int:
        return self.n_high // self.stride

    @property
    def dk(self) -> float:
        """Frequency-bin spacing in cycles/um on the high-resolution grid."""
        return 1.0 / (self.n_high * self.px_high)

    @property
    def ctf_radius_bins(self) -> float:
        return self.na * self.n_high * self.px_high / self.lambda_um

    def shift_bins(self, n: int) -> tuple[int, int]:
        """Integer spectral-bin shift (x, y) for the n-th illumination."""
        kx, ky = self.wavevectors[n]
        scale = self.n_high * self.px_high / self.lambda_um
        return int(round(kx * scale)), int(round(ky * scale))

    @property
    def synthetic_na(self) -> float:
        if not self.wavevectors:
            return self.na
        return self.na + max(np.hypot(kx, ky) for kx, ky in self.wavevectors)


def dft2(x: np.ndarray) -> np.ndarray:
    """Centered, unitary 2D DFT of a square field."""
    _check_square(x)
    return np.fft.fftshift(np.fft.fft2(x, norm="ortho"))


def idft2(spec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft2`."""
    _check_square(spec)
    return np.fft.ifft2(np.fft.ifftshift(spec), norm="ortho")


def _disk(side: int, radius_bins: float) -> np.ndarray:
    c = side // 2
    u = np.arange(side) - c
    uu, vv = np.meshgrid(u, u, indexing="ij")
    return (np.hypot(uu, vv) < radius_bins).astype(np.float64)


def make_ctf(cfg: OpticsConfig) -> np.ndarray:
    """Binary coherent transfer function on the high-resolution grid.

    A bin is passed iff its radial frequency is strictly below na/lambda.
    """
    return _disk(cfg.n_high, cfg.ctf_radius_bins)


def make_ctf_lowres(cfg: OpticsConfig) -> np.ndarray:
    """Centered CTF on the m_side measurement grid.

    The low-resolution grid shares the same bin spacing dk (m_side * stride *
    px_high = n_high * px_high), so the pixel radius is unchanged.
    """
    if cfg.ctf_radius_bins >= cfg.m_side / 2:
        raise OutOfBandError("pupil does not fit inside the low-resolution band")
    return _disk(cfg.m_side, cfg.ctf_radius_bins)


def make_ctf_n(cfg: OpticsConfig, n: int, wrap: bool = False) -> np.ndarray:
    """CTF translated by the integer-bin shift of the n-th illumination.

    Rejects shifts that push any part of the aperture outside the sampled
    band; pass ``wrap=True`` to allow the cyclic translation anyway.
    """
    sx, sy = cfg.shift_bins(n)
    half = cfg.n_high / 2
    r = cfg.ctf_radius_bins
    if not wrap and (abs(sx) + r > half or abs(sy) + r > half):
        raise OutOfBandError(
            f"aperture shifted by ({sx}, {sy}) bins exceeds the representable band"
        )
    return np.roll(make_ctf(cfg), shift=(sy, sx), axis=(0, 1))


def phase_ramp(side: int, sx: int, sy: int) -> np.ndarray:
    """Spatial phase ramp whose multiplication translates a centered spectrum by (sx, sy) bins."""
    idx = np.arange(side)
    yy, xx = np.meshgrid(idx, idx, indexing="ij")
    return np.exp(2j * np.pi * (sx * xx + sy * yy) / side)


def make_psf_n(cfg: OpticsConfig, n: int, wrap: bool = False) -> np.ndarray:
    """Coherent PSF of the n-th illumination: inverse transform of the shifted CTF."""
    return idft2(make_ctf_n(cfg, n, wrap=wrap))


@lru_cache(maxsize=1024)
def _psf_kernel_fft(cfg: OpticsConfig, n: int) -> np.ndarray:
    """Plain (uncentered) FFT of the n-th coherent PSF, cached per geometry.

    Convolving with PSF_n is ``ifft2(fft2(x) * kernel)``; correlating is the
    same with the conjugated kernel. The cached array must not be mutated.
    """
    return np.fft.fft2(make_psf_n(cfg, n))


def circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cyclic convolution sum_{x'} a(x') b(x - x') with indices mod N."""
    na_, nb = _check_square(a), _check_square(b)
    if na_ != nb:
        raise DimensionError(f"size mismatch: {a.shape} vs {b.shape}")
    return np.fft.ifft2(np.fft.fft2(a) * np.fft.fft2(b))


def circular_correlate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cyclic cross-correlation sum_x a(x) conj(b(x - y)); adjoint of convolution by b."""
    na_, nb = _check_square(a), _check_square(b)
    if na_ != nb:
        raise DimensionError(f"size mismatch: {a.shape} vs {b.shape}")
    return np.fft.ifft2(np.fft.fft2(a) * np.conj(np.fft.fft2(b)))


def decimate(x: np.ndarray, s: int) -> np.ndarray:
    """Keep samples at indices (i*s, j*s)."""
    side = _check_square(x)
    if s < 1 or side % s != 0:
        raise DimensionError(f"side {side} not divisible by stride {s}")
    return x[::s, ::s]


def zero_upsample(x: np.ndarray, s: int) -> np.ndarray:
    """Adjoint of :func:`decimate`: place samples at (i*s, j*s), zeros elsewhere."""
    side = _check_square(x)
    if s < 1:
        raise DimensionError(f"invalid stride {s}")
    out = np.zeros((side * s, side * s), dtype=x.dtype)
    out[::s, ::s] = x
    return out


def _window(side: int, shift: tuple[int, int], m_side: int) -> tuple[slice, slice]:
    if m_side > side or m_side < 1:
        raise DimensionError(f"window side {m_side} invalid for array side {side}")
    c = side // 2
    sx, sy = shift
    half = m_side // 2
    r0, c0 = c + sy - half, c + sx - half
    if r0 < 0 or c0 < 0 or r0 + m_side > side or c0 + m_side > side:
        raise OutOfBandError(f"window at shift {shift} falls outside the array")
    return slice(r0, r0 + m_side), slice(c0, c0 + m_side)


def crop_subspectrum(spec: np.ndarray, shift: tuple[int, int], m_side: int) -> np.ndarray:
    """Extract the m_side window centered at center + shift (shift given as (x, y) bins)."""
    side = _check_square(spec)
    rows, cols = _window(side, shift, m_side)
    return spec[rows, cols]


def embed_subspectrum(block: np.ndarray, shift: tuple[int, int], side: int) -> np.ndarray:
    """Adjoint of :func:`crop_subspectrum`: scatter the block into a zero side x side array."""
    m_side = _check_square(block)
    rows, cols = _window(side, shift, m_side)
    out = np.zeros((side, side), dtype=block.dtype)
    out[rows, cols] = block
    return out
