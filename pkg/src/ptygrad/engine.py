"""Reconstruction loop: models + gradients + optimizers + batching, with metrics."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DomainError, ReconstructionError
from .fields import dft2, idft2
from .gradients import (
    LossSpec,
    fp_exitwave_value_and_grad,
    fp_intensity_value_and_grad,
    sim_value_and_grad,
    spi_value_and_grad,
)
from .models import FpObject, FpSpectrumObject, SimScene
from .optim import BatchSchedule, OptState, OptimizerConfig, batches, step, update_count
from .simdata import Dataset, SimDataset, SpiDataset

_MODEL_TARGETS = {
    "intensity": "intensity",
    "exitwave": "exitwave",
    "spi": "singlepixel",
    "sim": "sim",
}

_MODEL_MODES = {"intensity": "stride", "exitwave": "crop"}


@dataclass(frozen=True)
class ReconConfig:
    model: str
    loss: LossSpec
    optimizer: OptimizerConfig
    schedule: BatchSchedule
    init: str = "upsampled_center"  # or "ones" or "provided"
    init_value: np.ndarray | None = None
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.model not in _MODEL_TARGETS:
            raise DomainError(f"unknown model {self.model!r}")
        if self.loss.target != _MODEL_TARGETS[self.model]:
            raise DomainError(
                f"loss target {self.loss.target!r} does not match model {self.model!r}"
            )
        if self.init not in ("ones", "upsampled_center", "provided"):
            raise DomainError(f"unknown init {self.init!r}")
        if self.init == "provided" and self.init_value is None:
            raise DomainError("init='provided' requires init_value")


@dataclass
class RunMetrics:
    loss_per_update: list = field(default_factory=list)
    loss_per_epoch: list = field(default_factory=list)
    rel_error_per_epoch: list | None = None
    wall_time: float = 0.0
    update_count: int = 0


def relative_error(recon: np.ndarray, truth: np.ndarray) -> float:
    """L2 mismatch after removing the global complex scale/phase ambiguity.

    Minimizes ||recon - c * truth|| / ||truth|| over complex scalars c; the
    minimizer is c = <truth, recon> / ||truth||^2.
    """
    recon = np.asarray(recon)
    truth = np.asarray(truth)
    if recon.shape != truth.shape:
        raise DimensionError(f"shape mismatch: {recon.shape} vs {truth.shape}")
    tnorm2 = np.vdot(truth, truth).real
    if tnorm2 <= 0:
        raise DomainError("truth must be nonzero")
    c = np.vdot(truth, recon) / tnorm2
    return float(np.linalg.norm(recon - c * truth) / np.sqrt(tnorm2))


class _Problem:
    """Adapter exposing a stacked real parameter array to the optimizer loop."""

    def __init__(self, params0, value_and_grad, output, truth):
        self.params0 = params0
        self.value_and_grad = value_and_grad  # (params, batch) -> (loss, grad)
        self.output = output  # params -> reconstructed object
        self.truth = truth  # complex/real ground truth or None

    def full_loss(self, params, n_total):
        return self.value_and_grad(params, list(range(n_total)))[0]


def _nn_upsample(img: np.ndarray, s: int) -> np.ndarray:
    return np.repeat(np.repeat(img, s, axis=0), s, axis=1)


def _center_index(wavevectors) -> int:
    return int(np.argmin([np.hypot(kx, ky) for kx, ky in wavevectors]))


def _calibrate_scale(params, value_and_grad_pred_mean, meas_mean):
    # Intensity predictions are quadratic in the parameters, so amplitude
    # scales with the square root of the intensity ratio.
    if value_and_grad_pred_mean <= 0 or meas_mean <= 0:
        return params
    return params * np.sqrt(meas_mean / value_and_grad_pred_mean)


def _build_fp_problem(dataset: Dataset, cfg: ReconConfig) -> _Problem:
    ocfg = dataset.cfg
    n = ocfg.n_high
    expected = _MODEL_MODES[cfg.model]
    if dataset.mode != expected:
        warnings.warn(
            f"model {cfg.model!r} normally consumes {expected!r}-mode data, "
            f"got {dataset.mode!r}; continuing as a cross-mode run",
            stacklevel=3,
        )

    if cfg.init == "provided":
        init_field = None
        params0 = np.array(cfg.init_value, dtype=np.float64)
    else:
        if cfg.init == "ones":
            init_field = np.ones((n, n), dtype=np.complex128)
        else:
            n0 = _center_index(ocfg.wavevectors)
            amp = _nn_upsample(np.sqrt(np.asarray(dataset.measurements[n0])), ocfg.stride)
            if cfg.model == "exitwave":
                # Crop-mode amplitudes carry an m_side/n_high DFT-convention
                # factor relative to the object amplitude.
                amp = amp / ocfg.stride
            init_field = amp.astype(np.complex128)
        params0 = None

    if cfg.model == "intensity":
        meas = [np.asarray(m, dtype=np.float64) for m in dataset.measurements]
        if params0 is None:
            params0 = np.stack([np.real(init_field), np.imag(init_field)])
            pred0 = _fp_int_pred_mean(params0, ocfg, meas)
            params0 = _calibrate_scale(params0, pred0, float(np.mean([m.mean() for m in meas])))

        def vag(params, batch):
            obj = FpObject(params[0], params[1])
            loss, gr, gi = fp_intensity_value_and_grad(obj, ocfg, batch, meas, cfg.loss.norm)
            return loss, np.stack([gr, gi])

        def output(params):
            return params[0] + 1j * params[1]

    else:  # exitwave
        sqrt_meas = [np.sqrt(np.asarray(m, dtype=np.float64)) for m in dataset.measurements]
        if params0 is None:
            from .simdata import aperture_union_mask

            # Bins outside the covered band never receive gradient; starting
            # them at zero keeps upsampling artifacts out of the result.
            spec = dft2(init_field) * aperture_union_mask(ocfg)
            params0 = np.stack([np.real(spec), np.imag(spec)])

        def vag(params, batch):
            obj = FpSpectrumObject(params[0], params[1])
            loss, gr, gi = fp_exitwave_value_and_grad(obj, ocfg, batch, sqrt_meas, cfg.loss.norm)
            return loss, np.stack([gr, gi])

        def output(params):
            return idft2(params[0] + 1j * params[1])

    truth = dataset.ground_truth.complex if dataset.ground_truth is not None else None
    return _Problem(params0, vag, output, truth)


def _fp_int_pred_mean(params, ocfg, meas) -> float:
    from .models import fp_intensity_forward

    n0 = _center_index(ocfg.wavevectors)
    pred = fp_intensity_forward(FpObject(params[0], params[1]), ocfg, n0)
    return float(pred.mean())


def _build_spi_problem(dataset: SpiDataset, cfg: ReconConfig) -> _Problem:
    patterns = [np.asarray(p, dtype=np.float64) for p in dataset.patterns]
    meas = [float(m) for m in dataset.measurements]
    side = dataset.side
    if cfg.init == "provided":
        params0 = np.array(cfg.init_value, dtype=np.float64)
    else:
        params0 = np.ones((side, side))
        pmean = float(np.mean([np.sum(p) for p in patterns]))
        mmean = float(np.mean(meas))
        if pmean > 0:
            params0 *= mmean / pmean

    def vag(params, batch):
        return spi_value_and_grad(params, patterns, batch, meas, cfg.loss.norm)

    return _Problem(params0, vag, lambda p: p, dataset.ground_truth)


def _build_sim_problem(dataset: SimDataset, cfg: ReconConfig) -> _Problem:
    patterns = [np.asarray(p, dtype=np.float64) for p in dataset.patterns]
    meas = [np.asarray(m, dtype=np.float64) for m in dataset.measurements]
    side = dataset.side
    if cfg.init == "provided":
        params0 = np.array(cfg.init_value, dtype=np.float64)
    else:
        pmean = float(np.mean([p.mean() for p in patterns]))
        mean_img = np.mean(meas, axis=0)
        params0 = mean_img / pmean if pmean > 0 else np.ones((side, side))
    scene = SimScene(np.clip(params0, 0, None), patterns,
                     np.asarray(dataset.psf_inc, dtype=np.float64))

    def vag(params, batch):
        # The scene wrapper validates non-negativity only at construction;
        # intermediate iterates may dip below zero.
        scene.object = params
        return sim_value_and_grad(scene, batch, meas, cfg.loss.norm)

    return _Problem(params0, vag, lambda p: p, dataset.ground_truth)


def _build_problem(dataset, cfg: ReconConfig) -> _Problem:
    if cfg.model in ("intensity", "exitwave"):
        if not isinstance(dataset, Dataset):
            raise DomainError(f"model {cfg.model!r} requires an FP Dataset")
        return _build_fp_problem(dataset, cfg)
    if cfg.model == "spi":
        if not isinstance(dataset, SpiDataset):
            raise DomainError("model 'spi' requires a SpiDataset")
        return _build_spi_problem(dataset, cfg)
    if not isinstance(dataset, SimDataset):
        raise DomainError("model 'sim' requires a SimDataset")
    return _build_sim_problem(dataset, cfg)


def run_reconstruction(dataset, cfg: ReconConfig, state_out: dict | None = None,
                       initial_state: OptState | None = None):
    """Iterate epochs x batches of forward/gradient/optimizer steps.

    Returns (recovered object, RunMetrics). With epochs = 0 the
    initialization is returned unchanged and the metrics are empty.
    ``state_out``, when given, receives the final parameters and optimizer
    accumulators for checkpointing; ``initial_state`` resumes from a
    previously captured OptState.
    """
    problem = _build_problem(dataset, cfg)
    sched = cfg.schedule
    n_meas = sched.n_total
    params = problem.params0.copy()
    state = initial_state if initial_state is not None else OptState.zeros(params.shape)
    metrics = RunMetrics()
    if problem.truth is not None:
        metrics.rel_error_per_epoch = []

    t0 = time.perf_counter()
    last_epoch = -1
    for epoch, batch in batches(sched):
        if epoch != last_epoch and last_epoch >= 0:
            _record_epoch(problem, params, n_meas, metrics)
        last_epoch = epoch
        loss, grad = problem.value_and_grad(params, batch)
        if not np.isfinite(loss):
            raise ReconstructionError(
                f"non-finite loss at epoch {epoch}, batch {batch}"
            )
        params, state = step(cfg.optimizer, state, params, grad)
        metrics.loss_per_update.append(loss)
    if last_epoch >= 0:
        _record_epoch(problem, params, n_meas, metrics)
    metrics.wall_time = time.perf_counter() - t0
    metrics.update_count = update_count(sched.epochs, sched.n_total, sched.batch_size)
    assert metrics.update_count == len(metrics.loss_per_update)
    if state_out is not None:
        state_out["params"] = params
        state_out["state"] = state
    return problem.output(params), metrics


def _record_epoch(problem: _Problem, params, n_meas, metrics: RunMetrics):
    metrics.loss_per_epoch.append(problem.full_loss(params, n_meas))
    if metrics.rel_error_per_epoch is not None:
        metrics.rel_error_per_epoch.append(
            relative_error(problem.output(params), problem.truth)
        )


def benchmark_sweep(dataset, base_cfg: ReconConfig, axes: dict) -> list[dict]:
    """Cartesian sweep over lr / optimizer / batch_size / loss_case axes.

    Every cell starts from the same seed and initialization. A failed cell is
    recorded with its error message instead of aborting the sweep.
    """
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise DomainError("sweep axes must be non-empty")
    known = {"lr", "optimizer", "batch_size", "loss_case"}
    unknown = set(axes) - known
    if unknown:
        raise DomainError(f"unknown sweep axes {sorted(unknown)}")

    cells = [{}]
    for name, values in axes.items():
        cells = [dict(c, **{name: v}) for c in cells for v in values]

    results = []
    for cell in cells:
        cfg = base_cfg
        if "lr" in cell:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, lr=cell["lr"]))
        if "optimizer" in cell:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, kind=cell["optimizer"]))
        if "batch_size" in cell:
            cfg = replace(cfg, schedule=replace(cfg.schedule, batch_size=cell["batch_size"]))
        if "loss_case" in cell:
            norm, model = cell["loss_case"]
            cfg = replace(cfg, model=model,
                          loss=LossSpec(norm=norm, target=_MODEL_TARGETS[model]))
        record = dict(cell)
        try:
            recon, metrics = run_reconstruction(dataset, cfg)
            record["metrics"] = metrics
            record["recon"] = recon
            record["error"] = None
        except Exception as exc:  # a failed cell is data, not a crash
            record["metrics"] = None
            record["recon"] = None
            record["error"] = str(exc)
        results.append(record)
    return results
