"""Forward models mapping an object estimate to predicted measurements.

Four models are provided: Fourier-ptychography intensity (two-channel object,
convolution form), Fourier-ptychography exit wave (object spectrum, band
selection plus magnitude projection), single-pixel imaging (pattern-weighted
sums), and structured illumination microscopy (pattern multiplication plus
incoherent blur).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .fields import (
    OpticsConfig,
    _psf_kernel_fft,
    circular_convolve,
    crop_subspectrum,
    decimate,
    dft2,
    idft2,
    make_ctf_lowres,
    make_psf_n,
)

#: Below this exit-wave magnitude the projection phase factor is defined as 1.
EPS_PHASE = 1e-12


@dataclass
class FpObject:
    """Two-channel spatial object: real and imaginary parts as separate real arrays."""

    o_r: np.ndarray
    o_i: np.ndarray

    def __post_init__(self):
        self.o_r = np.asarray(self.o_r, dtype=np.float64)
        self.o_i = np.asarray(self.o_i, dtype=np.float64)
        if self.o_r.shape != self.o_i.shape:
            raise DimensionError("object channels must share a shape")
        if not (np.all(np.isfinite(self.o_r)) and np.all(np.isfinite(self.o_i))):
            raise DomainError("object channels must be finite")

    @property
    def complex(self) -> np.ndarray:
        return self.o_r + 1j * self.o_i

    @classmethod
    def from_complex(cls, o: np.ndarray) -> "FpObject":
        return cls(np.real(o).copy(), np.imag(o).copy())


@dataclass
class FpSpectrumObject:
    """Two-channel object spectrum (real/imaginary parts of the centered spectrum)."""

    spec_r: np.ndarray
    spec_i: np.ndarray

    def __post_init__(self):
        self.spec_r = np.asarray(self.spec_r, dtype=np.float64)
        self.spec_i = np.asarray(self.spec_i, dtype=np.float64)
        if self.spec_r.shape != self.spec_i.shape:
            raise DimensionError("spectrum channels must share a shape")
        if not (np.all(np.isfinite(self.spec_r)) and np.all(np.isfinite(self.spec_i))):
            raise DomainError("spectrum channels must be finite")

    @property
    def complex(self) -> np.ndarray:
        return self.spec_r + 1j * self.spec_i

    @classmethod
    def from_complex(cls, spec: np.ndarray) -> "FpSpectrumObject":
        return cls(np.real(spec).copy(), np.imag(spec).copy())


@dataclass
class SimScene:
    """Non-negative object, illumination patterns, and unit-sum incoherent PSF."""

    object: np.ndarray
    patterns: list = field(default_factory=list)
    psf_inc: np.ndarray = None

    def __post_init__(self):
        self.object = np.asarray(self.object, dtype=np.float64)
        self.patterns = [np.asarray(p, dtype=np.float64) for p in self.patterns]
        self.psf_inc = np.asarray(self.psf_inc, dtype=np.float64)
        if np.any(self.object < 0):
            raise DomainError("SIM object must be non-negative")
        for p in self.patterns:
            if p.shape != self.object.shape:
                raise DimensionError("pattern shape mismatch")
            if np.any(p < 0):
                raise DomainError("illumination patterns must be non-negative")
        if abs(self.psf_inc.sum() - 1.0) > 1e-12:
            raise DomainError("incoherent PSF must sum to 1")


def fp_intensity_forward(obj: FpObject, cfg: OpticsConfig, n: int) -> np.ndarray:
    """Predicted low-resolution intensity: decimate(|O conv PSF_n|^2, stride)."""
    if obj.o_r.shape != (cfg.n_high, cfg.n_high):
        raise DimensionError(
            f"object side {obj.o_r.shape} does not match n_high={cfg.n_high}"
        )
    psi = np.fft.ifft2(np.fft.fft2(obj.complex) * _psf_kernel_fft(cfg, n))
    return decimate(np.abs(psi) ** 2, cfg.stride)


def fp_intensity_forward_two_channel(obj: FpObject, cfg: OpticsConfig, n: int) -> np.ndarray:
    """Same prediction computed in the split real/imaginary form.

    A = PSF_nr conv O_r - PSF_ni conv O_i, B = PSF_ni conv O_r + PSF_nr conv O_i,
    prediction = decimate(A^2 + B^2). Kept as an independent path for the
    model-equivalence check.
    """
    if obj.o_r.shape != (cfg.n_high, cfg.n_high):
        raise DimensionError("object side does not match n_high")
    psf = make_psf_n(cfg, n)
    pr, pi = np.real(psf), np.imag(psf)
    conv = lambda a, b: np.real(circular_convolve(a, b))
    a = conv(pr, obj.o_r) - conv(pi, obj.o_i)
    b = conv(pi, obj.o_r) + conv(pr, obj.o_i)
    return decimate(a**2 + b**2, cfg.stride)


def fp_exitwave_forward(obj: FpSpectrumObject, cfg: OpticsConfig, n: int) -> np.ndarray:
    """Low-resolution exit wave psi_n = idft2(crop(O_hat, shift_n) * CTF0)."""
    if obj.spec_r.shape != (cfg.n_high, cfg.n_high):
        raise DimensionError("spectrum side does not match n_high")
    phi_hat = fp_exitwave_spectrum(obj, cfg, n)
    return idft2(phi_hat)


def fp_exitwave_spectrum(obj: FpSpectrumObject, cfg: OpticsConfig, n: int) -> np.ndarray:
    """Band-limited exit-wave spectrum phi_hat_n on the m_side grid."""
    window = crop_subspectrum(obj.complex, cfg.shift_bins(n), cfg.m_side)
    return window * make_ctf_lowres(cfg)


def fmp_project(psi: np.ndarray, sqrt_meas: np.ndarray, eps: float = EPS_PHASE) -> np.ndarray:
    """Fourier-magnitude projection: keep the phase of psi, impose the measured amplitude.

    Returns the spectrum of the projected wave. Where |psi| < eps the phase
    factor is defined as 1.
    """
    if psi.shape != sqrt_meas.shape:
        raise DimensionError(f"shape mismatch: {psi.shape} vs {sqrt_meas.shape}")
    if np.any(sqrt_meas < 0):
        raise DomainError("measured amplitude must be non-negative")
    mag = np.abs(psi)
    phase = np.where(mag < eps, 1.0, psi / np.where(mag < eps, 1.0, mag))
    return dft2(sqrt_meas * phase)


def spi_forward(obj: np.ndarray, pattern: np.ndarray) -> float:
    """Single-pixel measurement: sum of the element-wise object/pattern product."""
    if obj.shape != pattern.shape:
        raise DimensionError(f"shape mismatch: {obj.shape} vs {pattern.shape}")
    return float(np.sum(obj * pattern))


def sim_forward(scene: SimScene, n: int) -> np.ndarray:
    """Structured-illumination image: (O * P_n) blurred by the incoherent PSF."""
    if not 0 <= n < len(scene.patterns):
        raise DomainError(f"pattern index {n} out of range")
    return np.real(circular_convolve(scene.object * scene.patterns[n], scene.psf_inc))
