"""Synthetic scenes, illumination geometry, pattern generators, and dataset synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .errors import DimensionError, DomainError
from .fields import OpticsConfig, dft2, idft2, make_ctf_lowres, _disk
from .models import (
    FpObject,
    SimScene,
    fp_exitwave_forward,
    fp_intensity_forward,
)

#: Wavelengths (um) of the red/green/blue LED channels used for color fusion.
LED_WAVELENGTHS_UM = {"red": 0.632, "green": 0.532, "blue": 0.470}

DEFAULT_PHASE_RANGE = (0.0, np.pi / 2)


def gen_illumination_grid(rows: int, cols: int, step: float,
                          allow_even: bool = False) -> list[tuple[float, float]]:
    """Centered raster grid of plane-wave vectors in sine units."""
    if not allow_even and (rows % 2 == 0 or cols % 2 == 0):
        raise DomainError("grid dimensions must be odd so normal incidence is included")
    out = []
    for i in range(rows):
        for j in range(cols):
            out.append(((i - (rows - 1) / 2) * step, (j - (cols - 1) / 2) * step))
    return out


def led_wavevectors(rows: int, cols: int, pitch_mm: float,
                    distance_mm: float) -> list[tuple[float, float]]:
    """Direction sines of LEDs on a planar grid at the given working distance."""
    if distance_mm <= 0:
        raise DomainError("distance must be positive")
    out = []
    for i in range(rows):
        for j in range(cols):
            dx = (i - (rows - 1) / 2) * pitch_mm
            dy = (j - (cols - 1) / 2) * pitch_mm
            norm = np.sqrt(dx * dx + dy * dy + distance_mm * distance_mm)
            out.append((dx / norm, dy / norm))
    return out


def synth_object(amplitude: np.ndarray, phase: np.ndarray,
                 phase_range: tuple[float, float] = DEFAULT_PHASE_RANGE) -> FpObject:
    """Complex object A * exp(i Phi) with Phi rescaled linearly into phase_range.

    A constant phase image has no dynamic range to rescale and is used as-is
    (assumed to already be in radians).
    """
    amplitude = np.asarray(amplitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if amplitude.shape != phase.shape:
        raise DimensionError("amplitude/phase shape mismatch")
    if np.any(amplitude < 0):
        raise DomainError("amplitude must be non-negative")
    lo, hi = phase_range
    pmin, pmax = phase.min(), phase.max()
    if pmax > pmin:
        phi = lo + (phase - pmin) / (pmax - pmin) * (hi - lo)
    else:
        phi = phase
    return FpObject.from_complex(amplitude * np.exp(1j * phi))


def gen_sim_patterns(side: int, count: int = 4,
                     freq_cycles_per_px: float = 0.1,
                     orientations_deg: list[float] | None = None,
                     phases: list[float] | None = None,
                     modulation: float = 1.0) -> list[np.ndarray]:
    """Sinusoidal illumination patterns P = 0.5 (1 + m cos(2 pi f (x cos t + y sin t) + p0)).

    Defaults to the 4-frame set: orientations 0/45/90/135 degrees, zero
    phases, full modulation.
    """
    if modulation > 1.0:
        raise DomainError("modulation must not exceed 1")
    if orientations_deg is None:
        orientations_deg = [k * 180.0 / count for k in range(count)]
    if phases is None:
        phases = [0.0] * count
    if not (len(orientations_deg) == len(phases) == count):
        raise DomainError("count must match orientations and phases lengths")
    idx = np.arange(side)
    yy, xx = np.meshgrid(idx, idx, indexing="ij")
    out = []
    for theta_deg, p0 in zip(orientations_deg, phases):
        t = np.deg2rad(theta_deg)
        arg = 2 * np.pi * freq_cycles_per_px * (xx * np.cos(t) + yy * np.sin(t)) + p0
        out.append(np.clip(0.5 * (1.0 + modulation * np.cos(arg)), 0.0, None))
    return out


def gen_spi_patterns(kind: str, count: int, side: int, seed: int = 0) -> list[np.ndarray]:
    """Single-pixel illumination patterns.

    'random_binary': i.i.d. {0, 1}. 'orthogonal': rows of a Sylvester +-1
    orthogonal matrix reshaped to side x side (side must be a power of two,
    count <= side^2).
    """
    if kind == "random_binary":
        rng = np.random.default_rng(seed)
        return [rng.integers(0, 2, size=(side, side)).astype(np.float64)
                for _ in range(count)]
    if kind == "orthogonal":
        if side < 1 or side & (side - 1):
            raise DomainError("orthogonal patterns require a power-of-two side")
        if count > side * side:
            raise DomainError(f"at most {side * side} orthogonal patterns exist")
        h = hadamard(side * side).astype(np.float64)
        return [h[i].reshape(side, side) for i in range(count)]
    raise DomainError(f"unknown pattern kind {kind!r}")


def incoherent_psf(side: int, radius_bins: float) -> np.ndarray:
    """Incoherent PSF: squared modulus of the coherent PSF, normalized to unit sum."""
    psf = np.abs(idft2(_disk(side, radius_bins))) ** 2
    return psf / psf.sum()


def make_test_object(side: int, seed: int = 0,
                     phase_range: tuple[float, float] = DEFAULT_PHASE_RANGE) -> FpObject:
    """Smooth random amplitude/phase object for simulations.

    Amplitude lies in [0.25, 1]; phase is an independent smooth field mapped
    into phase_range.
    """
    rng = np.random.default_rng(seed)

    def smooth(cut_frac):
        spec = dft2(rng.normal(size=(side, side)))
        spec *= _disk(side, cut_frac * side)
        f = np.real(idft2(spec))
        f -= f.min()
        peak = f.max()
        return f / peak if peak > 0 else f

    amplitude = 0.25 + 0.75 * smooth(0.08)
    phase = smooth(0.06)
    return synth_object(amplitude, phase, phase_range)


def aperture_union_mask(cfg: OpticsConfig) -> np.ndarray:
    """Union of all shifted pupil supports on the high-resolution spectrum grid."""
    c = cfg.n_high // 2
    u = np.arange(cfg.n_high) - c
    uu, vv = np.meshgrid(u, u, indexing="ij")
    mask = np.zeros((cfg.n_high, cfg.n_high), dtype=bool)
    for n in range(len(cfg.wavevectors)):
        sx, sy = cfg.shift_bins(n)
        mask |= np.hypot(uu - sy, vv - sx) < cfg.ctf_radius_bins
    return mask.astype(np.float64)


def bandlimit_to_apertures(obj: FpObject, cfg: OpticsConfig) -> FpObject:
    """Project the object spectrum onto the union of shifted apertures.

    Content outside that union is invisible to every measurement and can
    never be recovered, so fully recoverable ground truths are produced this
    way.
    """
    spec = dft2(obj.complex) * aperture_union_mask(cfg)
    return FpObject.from_complex(idft2(spec))


@dataclass(frozen=True)
class NoiseModel:
    kind: str  # "gaussian" or "poisson"
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.level < 0:
            raise DomainError("noise level must be non-negative")

    def apply(self, images: list[np.ndarray]) -> list[np.ndarray]:
        rng = np.random.default_rng(self.seed)
        out = []
        for img in images:
            if self.kind == "gaussian":
                noisy = img + self.level * rng.normal(size=img.shape)
            else:
                # level = photons at unit intensity; scaled Poisson draw.
                scale = self.level
                noisy = rng.poisson(np.clip(img, 0, None) * scale) / scale
            out.append(np.clip(noisy, 0.0, None))
        return out


@dataclass
class Dataset:
    """Fourier-ptychography measurement set plus generation provenance."""

    cfg: OpticsConfig
    mode: str  # "stride" or "crop"
    measurements: list = field(default_factory=list)
    ground_truth: FpObject | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("stride", "crop"):
            raise DomainError(f"unknown dataset mode {self.mode!r}")
        if len(self.measurements) != len(self.cfg.wavevectors):
            raise DimensionError("measurement count must equal wave-vector count")
        for m in self.measurements:
            if np.any(np.asarray(m) < -0.0):
                raise DomainError("intensity measurements must be non-negative")


@dataclass
class SpiDataset:
    """Single-pixel measurement set: scalar bucket readings per pattern."""

    patterns: list
    measurements: list
    side: int
    ground_truth: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)


@dataclass
class SimDataset:
    """Structured-illumination measurement set: one image per pattern."""

    patterns: list
    psf_inc: np.ndarray
    measurements: list
    side: int
    ground_truth: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)


def generate_dataset(cfg: OpticsConfig, obj: FpObject, mode: str,
                     noise: NoiseModel | None = None) -> Dataset:
    """Synthesize FP measurements in 'stride' (decimated full-res intensity)
    or 'crop' (band-selected low-res intensity) formation mode."""
    if obj.o_r.shape != (cfg.n_high, cfg.n_high):
        raise DimensionError("object side must equal n_high")
    from .models import FpSpectrumObject

    if mode == "stride":
        meas = [fp_intensity_forward(obj, cfg, n) for n in range(len(cfg.wavevectors))]
    elif mode == "crop":
        spec_obj = FpSpectrumObject.from_complex(dft2(obj.complex))
        meas = [np.abs(fp_exitwave_forward(spec_obj, cfg, n)) ** 2
                for n in range(len(cfg.wavevectors))]
    else:
        raise DomainError(f"unknown dataset mode {mode!r}")
    prov = {"mode": mode, "noise": None}
    if noise is not None:
        meas = noise.apply(meas)
        prov["noise"] = {"kind": noise.kind, "level": noise.level, "seed": noise.seed}
    return Dataset(cfg=cfg, mode=mode, measurements=meas,
                   ground_truth=obj, provenance=prov)


def generate_spi_dataset(obj: np.ndarray, patterns: list,
                         noise: NoiseModel | None = None,
                         provenance: dict | None = None) -> SpiDataset:
    from .models import spi_forward

    meas = [spi_forward(obj, p) for p in patterns]
    if noise is not None:
        rng = np.random.default_rng(noise.seed)
        meas = [m + noise.level * rng.normal() for m in meas]
    return SpiDataset(patterns=list(patterns), measurements=meas,
                      side=obj.shape[0], ground_truth=np.asarray(obj),
                      provenance=provenance or {})


def generate_sim_dataset(scene: SimScene, noise: NoiseModel | None = None,
                         provenance: dict | None = None) -> SimDataset:
    from .models import sim_forward

    meas = [sim_forward(scene, n) for n in range(len(scene.patterns))]
    if noise is not None:
        meas = noise.apply(meas)
    return SimDataset(patterns=list(scene.patterns), psf_inc=scene.psf_inc,
                      measurements=meas, side=scene.object.shape[0],
                      ground_truth=scene.object, provenance=provenance or {})
