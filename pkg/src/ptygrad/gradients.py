"""Loss functions and hand-derived analytic gradients for the four forward models.

All losses are plain sums over batch and pixels/bins (no averaging), so
gradient magnitudes, and therefore usable learning rates, scale with problem
size. Gradients with respect to the complex object O = O_r + i O_i are
computed as Wirtinger derivatives dL/dO*; the real-channel gradients are
dL/dO_r = 2 Re(dL/dO*) and dL/dO_i = 2 Im(dL/dO*).

sign(0) is defined as 0 for L1 losses, which makes exact fits stationary
points. The L1 gradient of a complex residual r uses r / (2|r|) with an
epsilon guard; the factor 1/2 is the one that makes the central
finite-difference check pass under the two-channel parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .fields import (
    OpticsConfig,
    _psf_kernel_fft,
    circular_correlate,
    crop_subspectrum,
    decimate,
    embed_subspectrum,
    idft2,
    make_ctf_lowres,
    zero_upsample,
)
from .models import (
    FpObject,
    FpSpectrumObject,
    SimScene,
    fmp_project,
    fp_exitwave_spectrum,
    fp_intensity_forward,
    sim_forward,
    spi_forward,
)

#: Complex L1 residuals with modulus below this are treated as exactly zero.
EPS_L1 = 1e-12

_NORMS = ("l1", "l2")
_TARGETS = ("intensity", "exitwave", "singlepixel", "sim")


@dataclass(frozen=True)
class LossSpec:
    norm: str = "l1"
    target: str = "intensity"

    def __post_init__(self):
        if self.norm not in _NORMS:
            raise DomainError(f"norm must be one of {_NORMS}, got {self.norm!r}")
        if self.target not in _TARGETS:
            raise DomainError(f"target must be one of {_TARGETS}, got {self.target!r}")


def _check_lists(a, b):
    if len(a) != len(b):
        raise DimensionError(f"batch length mismatch: {len(a)} vs {len(b)}")
    for x, y in zip(a, b):
        if np.shape(x) != np.shape(y):
            raise DimensionError(f"shape mismatch: {np.shape(x)} vs {np.shape(y)}")


def loss_intensity(meas: list, pred: list, norm: str = "l1") -> float:
    """Sum over the batch of the pixel-wise L1 or L2 intensity mismatch."""
    _check_lists(meas, pred)
    total = 0.0
    for m, p in zip(meas, pred):
        d = np.asarray(m) - np.asarray(p)
        total += float(np.sum(np.abs(d)) if norm == "l1" else np.sum(d * d))
    return total


def loss_exitwave(phi_update: list, phi_hat: list, norm: str = "l2") -> float:
    """Sum over the batch of the bin-wise complex-modulus mismatch."""
    _check_lists(phi_update, phi_hat)
    total = 0.0
    for u, h in zip(phi_update, phi_hat):
        d = np.abs(np.asarray(u) - np.asarray(h))
        total += float(np.sum(d) if norm == "l1" else np.sum(d * d))
    return total


def _dloss_dres(residual: np.ndarray, norm: str) -> np.ndarray:
    """d(loss)/d(prediction) for a real residual (measured - predicted)."""
    if norm == "l1":
        return -np.sign(residual)
    return -2.0 * residual


def fp_intensity_value_and_grad(
    obj: FpObject,
    cfg: OpticsConfig,
    batch: list,
    meas: list,
    norm: str = "l1",
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and (grad o_r, grad o_i) for the intensity model, summed over the batch.

    Per measurement: psi = O conv PSF_n, prediction = decimate(|psi|^2),
    dL/dO* = correlate(zero_upsample(dl/dI_pred) * psi, PSF_n).
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    o = obj.complex
    loss = 0.0
    acc = np.zeros_like(o)
    o_fft = np.fft.fft2(o)
    for n in batch:
        kernel = _psf_kernel_fft(cfg, n)
        psi = np.fft.ifft2(o_fft * kernel)
        pred = decimate(np.abs(psi) ** 2, cfg.stride)
        r = np.asarray(meas[n]) - pred
        loss += float(np.sum(np.abs(r)) if norm == "l1" else np.sum(r * r))
        w = zero_upsample(_dloss_dres(r, norm), cfg.stride) * psi
        acc += np.fft.ifft2(np.fft.fft2(w) * np.conj(kernel))
    return loss, 2.0 * np.real(acc), 2.0 * np.imag(acc)


def grad_fp_intensity(obj, cfg, batch, meas, norm="l1"):
    return fp_intensity_value_and_grad(obj, cfg, batch, meas, norm)[1:]


def fp_exitwave_value_and_grad(
    obj: FpSpectrumObject,
    cfg: OpticsConfig,
    batch: list,
    sqrt_meas: list,
    norm: str = "l2",
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and spectrum-channel gradients for the exit-wave model.

    The magnitude-projection output phi_update is treated as a constant
    target (stop-gradient): only phi_hat = crop(O_hat) * CTF0 is
    differentiated.
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    ohat = obj.complex
    ctf0 = make_ctf_lowres(cfg)
    loss = 0.0
    acc = np.zeros_like(ohat)
    for n in batch:
        shift = cfg.shift_bins(n)
        phi_hat = crop_subspectrum(ohat, shift, cfg.m_side) * ctf0
        psi = idft2(phi_hat)
        phi_update = fmp_project(psi, np.asarray(sqrt_meas[n]))
        r = phi_hat - phi_update
        mod = np.abs(r)
        if norm == "l2":
            loss += float(np.sum(mod * mod))
            gwin = ctf0 * r
        else:
            loss += float(np.sum(mod))
            unit = np.where(mod < EPS_L1, 0.0, r / np.where(mod < EPS_L1, 1.0, mod))
            gwin = ctf0 * unit / 2.0
        acc += embed_subspectrum(gwin, shift, cfg.n_high)
    return loss, 2.0 * np.real(acc), 2.0 * np.imag(acc)


def grad_fp_exitwave(obj, cfg, batch, sqrt_meas, norm="l2"):
    return fp_exitwave_value_and_grad(obj, cfg, batch, sqrt_meas, norm)[1:]


def spi_value_and_grad(
    obj: np.ndarray,
    patterns: list,
    batch: list,
    meas: list,
    norm: str = "l1",
) -> tuple[float, np.ndarray]:
    """Loss and object gradient for single-pixel imaging, summed over the batch."""
    if len(batch) == 0:
        raise DomainError("empty batch")
    loss = 0.0
    grad = np.zeros(np.shape(obj), dtype=np.float64)
    for n in batch:
        p = np.asarray(patterns[n])
        r = float(meas[n]) - spi_forward(np.asarray(obj), p)
        if norm == "l1":
            loss += abs(r)
            grad += -np.sign(r) * p
        else:
            loss += r * r
            grad += -2.0 * r * p
    return loss, grad


def grad_spi(obj, patterns, batch, meas, norm="l1"):
    return spi_value_and_grad(obj, patterns, batch, meas, norm)[1]


def sim_value_and_grad(
    scene: SimScene,
    batch: list,
    meas: list,
    norm: str = "l1",
) -> tuple[float, np.ndarray]:
    """Loss and object gradient for SIM, summed over the batch.

    The chain rule turns the forward blur into a correlation with the PSF
    (convolution with the index-reversed kernel).
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    loss = 0.0
    grad = np.zeros_like(scene.object)
    for n in batch:
        r = np.asarray(meas[n]) - sim_forward(scene, n)
        loss += float(np.sum(np.abs(r)) if norm == "l1" else np.sum(r * r))
        g = _dloss_dres(r, norm)
        grad += scene.patterns[n] * np.real(circular_correlate(g, scene.psf_inc))
    return loss, grad


def grad_sim(scene, batch, meas, norm="l1"):
    return sim_value_and_grad(scene, batch, meas, norm)[1]


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


@dataclass
class FdReport:
    max_rel_error: float
    n_checked: int
    n_excluded: int


def _rel_error(fd: float, an: float, scale: float) -> float:
    denom = max(abs(fd), abs(an), 1e-10 * max(scale, 1.0))
    return abs(fd - an) / denom


def central_difference_check(
    loss_fn,
    grad: np.ndarray,
    theta: np.ndarray,
    step: float,
    rng: np.random.Generator,
    n_samples: int = 200,
    residual_fn=None,
) -> FdReport:
    """Compare an analytic gradient against central finite differences.

    ``loss_fn(theta)`` returns a scalar; ``grad`` is the analytic gradient at
    ``theta`` (same shape). A random subset of parameters is probed. When
    ``residual_fn`` is given (L1 losses), parameters whose perturbation flips
    the sign of any residual, or drives a complex residual modulus near zero,
    are excluded from the comparison (kink exclusion).
    """
    if step <= 0:
        raise DomainError("finite-difference step must be positive")
    flat = theta.reshape(-1)
    n = flat.size
    idx = np.arange(n) if n <= n_samples else rng.choice(n, size=n_samples, replace=False)
    scale = float(np.max(np.abs(grad))) if grad.size else 1.0
    max_err = 0.0
    checked = excluded = 0
    gflat = grad.reshape(-1)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        f_plus = loss_fn(theta)
        r_plus = residual_fn(theta) if residual_fn is not None else None
        flat[i] = orig - step
        f_minus = loss_fn(theta)
        r_minus = residual_fn(theta) if residual_fn is not None else None
        flat[i] = orig
        if residual_fn is not None and _crosses_kink(r_plus, r_minus):
            excluded += 1
            continue
        fd = (f_plus - f_minus) / (2.0 * step)
        max_err = max(max_err, _rel_error(fd, float(gflat[i]), scale))
        checked += 1
    return FdReport(max_rel_error=max_err, n_checked=checked, n_excluded=excluded)


def _crosses_kink(r_plus, r_minus) -> bool:
    rp = np.concatenate([np.asarray(r).reshape(-1) for r in r_plus])
    rm = np.concatenate([np.asarray(r).reshape(-1) for r in r_minus])
    if np.iscomplexobj(rp) or np.iscomplexobj(rm):
        # |r| is non-smooth only at r = 0; exclude near-zero moduli.
        tol = 1e-6 * max(np.max(np.abs(rp)), np.max(np.abs(rm)), 1.0)
        return bool(np.min(np.abs(rp)) < tol or np.min(np.abs(rm)) < tol)
    tol = 1e-12 * max(np.max(np.abs(rp)), np.max(np.abs(rm)), 1.0)
    mask = (np.abs(rp) > tol) & (np.abs(rm) > tol)
    if not np.all(np.sign(rp)[mask] == np.sign(rm)[mask]):
        return True
    return bool(np.any(~mask))


def finite_diff_check(
    model_kind: str,
    loss_spec: LossSpec,
    problem: dict | None = None,
    seed: int = 0,
    step: float = 1e-5,
    n_samples: int = 200,
) -> FdReport:
    """Build a random problem for ``model_kind`` and report the max FD mismatch.

    ``model_kind`` is one of 'quadratic', 'fp_intensity', 'fp_exitwave',
    'spi', 'sim'. ``problem`` supplies sizes ('side', plus 'stride'/'n_meas'
    where relevant) and an optional 'corrupt' flag that deliberately damages
    the analytic gradient (negative-control hook).
    """
    problem = dict(problem or {})
    rng = np.random.default_rng(seed)
    side = int(problem.get("side", 8))
    if side > 32:
        raise DomainError("finite_diff_check problems are limited to side <= 32")
    corrupt = bool(problem.get("corrupt", False))
    norm = loss_spec.norm

    if model_kind == "quadratic":
        center = rng.normal(size=(side, side))
        theta = rng.normal(size=(side, side))
        loss_fn = lambda t: float(np.sum((t - center) ** 2))
        grad = 2.0 * (theta - center)
        if corrupt:
            grad = grad * 1.01
        return central_difference_check(loss_fn, grad, theta, step, rng, n_samples)

    if model_kind == "fp_intensity":
        stride = int(problem.get("stride", 2))
        n_meas = int(problem.get("n_meas", 4))
        cfg = _small_fp_config(side, stride, n_meas, rng)
        truth = FpObject(rng.normal(size=(side, side)), rng.normal(size=(side, side)))
        meas = [fp_intensity_forward(truth, cfg, n) + 0.3 * rng.random((cfg.m_side, cfg.m_side))
                for n in range(n_meas)]
        batch = list(range(n_meas))
        theta = np.stack([rng.normal(size=(side, side)), rng.normal(size=(side, side))])

        def loss_fn(t):
            return fp_intensity_value_and_grad(FpObject(t[0], t[1]), cfg, batch, meas, norm)[0]

        def residual_fn(t):
            o = FpObject(t[0], t[1])
            return [np.asarray(meas[n]) - fp_intensity_forward(o, cfg, n) for n in batch]

        _, gr, gi = fp_intensity_value_and_grad(FpObject(theta[0], theta[1]), cfg, batch, meas, norm)
        grad = np.stack([gr, gi])
        if corrupt:
            grad = grad + 0.01 * np.max(np.abs(grad)) + 0.01
        return central_difference_check(
            loss_fn, grad, theta, step, rng, n_samples,
            residual_fn=residual_fn if norm == "l1" else None,
        )

    if model_kind == "fp_exitwave":
        stride = int(problem.get("stride", 2))
        n_meas = int(problem.get("n_meas", 4))
        cfg = _small_fp_config(side, stride, n_meas, rng)
        sqrt_meas = [rng.random((cfg.m_side, cfg.m_side)) + 0.1 for _ in range(n_meas)]
        batch = list(range(n_meas))
        theta = np.stack([rng.normal(size=(side, side)), rng.normal(size=(side, side))])

        # phi_update is frozen at the analytic-gradient evaluation point
        # (stop-gradient through the magnitude projection).
        obj0 = FpSpectrumObject(theta[0], theta[1])
        targets0 = []
        for n in batch:
            psi = idft2(fp_exitwave_spectrum(obj0, cfg, n))
            targets0.append(fmp_project(psi, sqrt_meas[n]))

        def loss_fn(t):
            obj = FpSpectrumObject(t[0], t[1])
            phis = [fp_exitwave_spectrum(obj, cfg, n) for n in batch]
            return loss_exitwave(targets0, phis, norm)

        def residual_fn(t):
            obj = FpSpectrumObject(t[0], t[1])
            return [fp_exitwave_spectrum(obj, cfg, n) - targets0[i]
                    for i, n in enumerate(batch)]

        _, gr, gi = fp_exitwave_value_and_grad(obj0, cfg, batch, sqrt_meas, norm)
        grad = np.stack([gr, gi])
        if corrupt:
            grad = grad + 0.01 * np.max(np.abs(grad)) + 0.01
        return central_difference_check(
            loss_fn, grad, theta, step, rng, n_samples,
            residual_fn=residual_fn if norm == "l1" else None,
        )

    if model_kind == "spi":
        n_meas = int(problem.get("n_meas", 12))
        patterns = [rng.random((side, side)) for _ in range(n_meas)]
        truth = rng.random((side, side))
        meas = [spi_forward(truth, p) + 0.1 * rng.normal() for p in patterns]
        batch = list(range(n_meas))
        theta = rng.normal(size=(side, side))
        loss_fn = lambda t: spi_value_and_grad(t, patterns, batch, meas, norm)[0]
        residual_fn = lambda t: [np.array([meas[n] - spi_forward(t, patterns[n])])
                                 for n in batch]
        grad = spi_value_and_grad(theta, patterns, batch, meas, norm)[1]
        if corrupt:
            grad = grad + 0.01 * np.max(np.abs(grad)) + 0.01
        return central_difference_check(
            loss_fn, grad, theta, step, rng, n_samples,
            residual_fn=residual_fn if norm == "l1" else None,
        )

    if model_kind == "sim":
        n_meas = int(problem.get("n_meas", 4))
        patterns = [rng.random((side, side)) for _ in range(n_meas)]
        psf = rng.random((side, side))
        psf /= psf.sum()
        truth = rng.random((side, side))
        scene_true = SimScene(truth, patterns, psf)
        meas = [sim_forward(scene_true, n) + 0.05 * rng.normal(size=(side, side))
                for n in range(n_meas)]
        batch = list(range(n_meas))
        # Probe in the interior of the non-negativity constraint.
        theta = rng.random((side, side)) + 0.5

        def loss_fn(t):
            return sim_value_and_grad(SimScene(t, patterns, psf), batch, meas, norm)[0]

        def residual_fn(t):
            scene = SimScene(t, patterns, psf)
            return [np.asarray(meas[n]) - sim_forward(scene, n) for n in batch]

        grad = sim_value_and_grad(SimScene(theta, patterns, psf), batch, meas, norm)[1]
        if corrupt:
            grad = grad + 0.01 * np.max(np.abs(grad)) + 0.01
        return central_difference_check(
            loss_fn, grad, theta, step, rng, n_samples,
            residual_fn=residual_fn if norm == "l1" else None,
        )

    raise DomainError(f"unknown model kind {model_kind!r}")


def _small_fp_config(side: int, stride: int, n_meas: int, rng: np.random.Generator) -> OpticsConfig:
    """Random small optics geometry whose shifted apertures stay in band."""
    px, lam = 1.0, 1.0
    # Radius ~ side/8 bins keeps room for shifts on tiny grids.
    na = (side / 8.0) * lam / (side * px)
    max_shift = max(side // 2 - int(np.ceil(side / 8.0)) - 1, 0)
    m_side = side // stride
    # Crop windows must also stay inside the array.
    max_shift = min(max_shift, side // 2 - m_side // 2, (side - m_side) - side // 2 + m_side // 2)
    wavevectors = []
    for _ in range(n_meas):
        sx, sy = rng.integers(-max_shift, max_shift + 1, size=2)
        wavevectors.append((sx * lam / (side * px), sy * lam / (side * px)))
    return OpticsConfig(lambda_um=lam, na=na, n_high=side, stride=stride,
                        px_high=px, wavevectors=tuple(wavevectors))


def complex_gradient(grad_r: np.ndarray, grad_i: np.ndarray) -> np.ndarray:
    """Wirtinger conjugate gradient dL/dO* recovered from the two channel gradients."""
    return 0.5 * (grad_r + 1j * grad_i)
