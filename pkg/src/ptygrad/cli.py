"""Command-line interface: simulate / reconstruct / gradcheck / sweep / render / info."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import dataio
from .engine import ReconConfig, benchmark_sweep, relative_error, run_reconstruction
from .errors import ConfigError, PtygradError
from .fields import OpticsConfig, dft2
from .gradients import LossSpec, finite_diff_check
from .models import SimScene
from .optim import BatchSchedule, OptimizerConfig
from .simdata import (
    Dataset,
    NoiseModel,
    SimDataset,
    SpiDataset,
    bandlimit_to_apertures,
    gen_illumination_grid,
    gen_sim_patterns,
    gen_spi_patterns,
    generate_dataset,
    generate_sim_dataset,
    generate_spi_dataset,
    incoherent_psf,
    make_test_object,
)

_GRADCHECK_MODELS = ("fp_intensity", "fp_exitwave", "spi", "sim")
_FD_THRESHOLDS = {"l1": 1e-5, "l2": 1e-6}


def _check_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")


def _load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_preset(name: str) -> dict:
    """Load one of the shipped preset configs (e.g. 'fp-dense-grid')."""
    ref = resources.files("ptygrad.presets").joinpath(f"{name}.json")
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return json.loads(ref.read_text())


def _resolve_config(arg: str) -> dict:
    if arg.startswith("preset:"):
        return load_preset(arg.split(":", 1)[1])
    return _load_config(arg)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_FP_KEYS = {"type", "n_high", "stride", "na", "lambda_um", "px_high",
            "illumination", "mode", "object", "noise", "seed"}
_OBJECT_KEYS = {"kind", "seed", "phase_range", "bandlimit"}
_NOISE_KEYS = {"kind", "level", "seed"}


def _build_noise(spec, default_seed) -> NoiseModel | None:
    if not spec:
        return None
    _check_keys(spec, _NOISE_KEYS, "noise")
    return NoiseModel(kind=spec["kind"], level=spec["level"],
                      seed=spec.get("seed", default_seed))


def _build_fp_dataset(config: dict, seed: int) -> Dataset:
    _check_keys(config, _FP_KEYS, "simulate config")
    ill = config["illumination"]
    _check_keys(ill, {"rows", "cols", "step"}, "illumination")
    wavevectors = gen_illumination_grid(ill["rows"], ill["cols"], ill["step"])
    cfg = OpticsConfig(lambda_um=config["lambda_um"], na=config["na"],
                       n_high=config["n_high"], stride=config["stride"],
                       px_high=config["px_high"], wavevectors=tuple(wavevectors))
    obj_spec = dict(config.get("object", {}))
    _check_keys(obj_spec, _OBJECT_KEYS, "object")
    obj_seed = obj_spec.get("seed", seed)
    phase_range = tuple(obj_spec.get("phase_range", (0.0, np.pi / 2)))
    obj = make_test_object(cfg.n_high, seed=obj_seed, phase_range=phase_range)
    if obj_spec.get("bandlimit", False):
        obj = bandlimit_to_apertures(obj, cfg)
    noise = _build_noise(config.get("noise"), seed)
    ds = generate_dataset(cfg, obj, config.get("mode", "crop"), noise=noise)
    ds.provenance.update({"seed": seed, "object_seed": obj_seed, "config": config})
    return ds


def _build_sim_dataset(config: dict, seed: int) -> SimDataset:
    _check_keys(config, {"type", "side", "ctf_radius_bins", "patterns", "object",
                         "noise", "seed"}, "simulate config")
    side = config["side"]
    radius = config["ctf_radius_bins"]
    pat_spec = dict(config.get("patterns", {}))
    _check_keys(pat_spec, {"count", "freq_factor", "freq_cycles_per_px",
                           "orientations_deg", "phases", "modulation"}, "patterns")
    count = pat_spec.get("count", 4)
    if "freq_cycles_per_px" in pat_spec:
        freq = pat_spec["freq_cycles_per_px"]
    else:
        # Default pattern frequency: factor x the incoherent cutoff 2r/side.
        freq = pat_spec.get("freq_factor", 0.9) * 2.0 * radius / side
    patterns = gen_sim_patterns(side, count=count, freq_cycles_per_px=freq,
                                orientations_deg=pat_spec.get("orientations_deg"),
                                phases=pat_spec.get("phases"),
                                modulation=pat_spec.get("modulation", 1.0))
    obj_spec = dict(config.get("object", {}))
    _check_keys(obj_spec, _OBJECT_KEYS, "object")
    obj = np.abs(make_test_object(side, seed=obj_spec.get("seed", seed)).complex)
    scene = SimScene(obj, patterns, incoherent_psf(side, radius))
    noise = _build_noise(config.get("noise"), seed)
    return generate_sim_dataset(scene, noise=noise,
                                provenance={"seed": seed, "config": config})


def _build_spi_dataset(config: dict, seed: int) -> SpiDataset:
    _check_keys(config, {"type", "side", "patterns", "object", "noise", "seed"},
                "simulate config")
    side = config["side"]
    pat_spec = dict(config.get("patterns", {}))
    _check_keys(pat_spec, {"kind", "count", "seed"}, "patterns")
    patterns = gen_spi_patterns(pat_spec.get("kind", "orthogonal"),
                                pat_spec.get("count", side * side), side,
                                seed=pat_spec.get("seed", seed))
    obj_spec = dict(config.get("object", {}))
    _check_keys(obj_spec, _OBJECT_KEYS, "object")
    obj = np.abs(make_test_object(side, seed=obj_spec.get("seed", seed)).complex)
    noise = _build_noise(config.get("noise"), seed)
    return generate_spi_dataset(obj, patterns, noise=noise,
                                provenance={"seed": seed, "config": config})


def build_dataset_from_config(config: dict, seed: int):
    kind = config.get("type")
    if kind == "fp":
        return _build_fp_dataset(config, seed)
    if kind == "sim":
        return _build_sim_dataset(config, seed)
    if kind == "spi":
        return _build_spi_dataset(config, seed)
    raise ConfigError(f"simulate config: unknown type {kind!r}")


def cmd_simulate(args) -> int:
    config = _resolve_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    dataset = build_dataset_from_config(config, seed)
    out = Path(args.out)
    dataio.save_dataset(dataset, out)
    n = len(dataset.measurements)
    print(f"wrote {n} measurements to {out / 'manifest.json'}")
    return 0


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------

_RECON_KEYS = {"model", "norm", "optimizer", "epochs", "batch_size", "order",
               "init", "seed", "deterministic"}
_OPT_KEYS = {"kind", "lr", "momentum", "decay", "beta1", "beta2", "eps"}

_MODEL_TARGETS = {"intensity": "intensity", "exitwave": "exitwave",
                  "spi": "singlepixel", "sim": "sim"}


def build_recon_config(config: dict, n_meas: int, seed: int,
                       deterministic: bool) -> ReconConfig:
    _check_keys(config, _RECON_KEYS, "reconstruct config")
    model = config["model"]
    if model not in _MODEL_TARGETS:
        raise ConfigError(f"unknown model {model!r}")
    opt_spec = dict(config.get("optimizer", {}))
    _check_keys(opt_spec, _OPT_KEYS, "optimizer")
    optimizer = OptimizerConfig(**opt_spec)
    schedule = BatchSchedule(n_total=n_meas,
                             batch_size=config.get("batch_size", 1),
                             epochs=config.get("epochs", 20),
                             order=config.get("order", "sequential"),
                             seed=seed if config.get("order") == "shuffled" else None)
    return ReconConfig(model=model,
                       loss=LossSpec(norm=config.get("norm", "l1"),
                                     target=_MODEL_TARGETS[model]),
                       optimizer=optimizer, schedule=schedule,
                       init=config.get("init", "upsampled_center"),
                       seed=seed, deterministic=deterministic)


def write_loss_csv(path: Path, metrics, n_per_epoch: int) -> None:
    """Columns: update_index, epoch, loss, rel_error (blank except at epoch ends)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update_index", "epoch", "loss", "rel_error"])
        rel = metrics.rel_error_per_epoch
        for i, loss in enumerate(metrics.loss_per_update):
            epoch = i // n_per_epoch
            last_of_epoch = (i + 1) % n_per_epoch == 0
            rel_val = ""
            if last_of_epoch and rel is not None and epoch < len(rel):
                rel_val = repr(rel[epoch])
            writer.writerow([i, epoch, repr(loss), rel_val])


def cmd_reconstruct(args) -> int:
    dataset = dataio.load_dataset(args.data)
    config = _resolve_config(args.config)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    n_meas = len(dataset.measurements)
    rcfg = build_recon_config(config, n_meas, seed, args.deterministic)

    initial_state = None
    if args.resume:
        params, state = dataio.load_checkpoint(args.resume)
        rcfg = ReconConfig(**{**rcfg.__dict__, "init": "provided", "init_value": params})
        initial_state = state

    state_out: dict = {}
    recon, metrics = run_reconstruction(dataset, rcfg, state_out=state_out,
                                        initial_state=initial_state)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recon_c = np.asarray(recon, dtype=np.complex128)
    dataio._write_raw(out / "recon_complex.raw",
                      np.stack([np.real(recon_c), np.imag(recon_c)]))
    dataio.save_png(out / "amplitude.png", np.abs(recon_c))
    # Phase convention: [-pi, pi] mapped linearly to [0, 255].
    dataio.save_png(out / "phase.png", np.angle(recon_c), vmin=-np.pi, vmax=np.pi)
    n_per_epoch = -(-n_meas // rcfg.schedule.batch_size)
    write_loss_csv(out / "loss.csv", metrics, n_per_epoch)
    dataio.save_checkpoint(out / "checkpoint", state_out["params"], state_out["state"])

    summary = {
        "model": rcfg.model, "norm": rcfg.loss.norm,
        "optimizer": rcfg.optimizer.kind, "lr": rcfg.optimizer.lr,
        "epochs": rcfg.schedule.epochs, "batch_size": rcfg.schedule.batch_size,
        "seed": seed, "update_count": metrics.update_count,
        "final_loss": metrics.loss_per_epoch[-1] if metrics.loss_per_epoch else None,
        "final_rel_error": (metrics.rel_error_per_epoch[-1]
                            if metrics.rel_error_per_epoch else None),
        "wall_time_s": metrics.wall_time,
        "phase_png_convention": "[-pi, pi] -> [0, 255]",
    }
    (out / "run_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"reconstruction written to {out}")
    if summary["final_rel_error"] is not None:
        print(f"final relative error: {summary['final_rel_error']:.6g}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    models = _GRADCHECK_MODELS if args.model == "all" else (args.model,)
    norms = ("l1", "l2") if args.norm == "both" else (args.norm,)
    targets = {"fp_intensity": "intensity", "fp_exitwave": "exitwave",
               "spi": "singlepixel", "sim": "sim", "quadratic": "intensity"}
    failed = False
    print(f"{'model':<14}{'norm':<6}{'max rel err':<14}{'checked':<9}{'kinks excluded':<16}status")
    for model in models:
        for norm in norms:
            spec = LossSpec(norm=norm, target=targets[model])
            problem = {"side": args.size, "corrupt": args.corrupt}
            report = finite_diff_check(model, spec, problem, seed=args.seed,
                                       step=args.step)
            threshold = _FD_THRESHOLDS[norm]
            ok = report.max_rel_error <= threshold
            failed |= not ok
            print(f"{model:<14}{norm:<6}{report.max_rel_error:<14.3e}"
                  f"{report.n_checked:<9}{report.n_excluded:<16}"
                  f"{'PASS' if ok else 'FAIL'}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_KEYS = _RECON_KEYS | {"sweep"}
_AXIS_KEYS = {"lr", "optimizer", "batch_size", "loss_case"}


def cmd_sweep(args) -> int:
    dataset = dataio.load_dataset(args.data)
    config = _resolve_config(args.config)
    _check_keys(config, _SWEEP_KEYS, "sweep config")
    axes = dict(config.get("sweep", {}))
    _check_keys(axes, _AXIS_KEYS, "sweep axes")
    if not axes or any(not v for v in axes.values()):
        print("error: sweep config must provide at least one non-empty axis",
              file=sys.stderr)
        return 2
    if "loss_case" in axes:
        axes["loss_case"] = [tuple(c) for c in axes["loss_case"]]
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    base = {k: v for k, v in config.items() if k != "sweep"}
    rcfg = build_recon_config(base, len(dataset.measurements), seed,
                              args.deterministic)
    results = benchmark_sweep(dataset, rcfg, axes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_sweep_csv(out / "sweep.csv", results, axes)
    _plot_sweep(out, results, axes)
    n_failed = sum(1 for r in results if r["error"] is not None)
    print(f"{len(results)} cells written to {out} ({n_failed} failed)")
    return 0


def _cell_label(record: dict, axes: dict) -> str:
    parts = []
    for axis in axes:
        v = record[axis]
        parts.append(f"{axis}={'-'.join(map(str, v)) if isinstance(v, tuple) else v}")
    return ",".join(parts)


def _write_sweep_csv(path: Path, results: list, axes: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "series", "index", "loss", "error"])
        for record in results:
            label = _cell_label(record, axes)
            if record["error"] is not None:
                writer.writerow([label, "", "", "", record["error"]])
                continue
            m = record["metrics"]
            for i, loss in enumerate(m.loss_per_update):
                writer.writerow([label, "update", i, repr(loss), ""])
            for i, loss in enumerate(m.loss_per_epoch):
                writer.writerow([label, "epoch", i, repr(loss), ""])


def _plot_sweep(outdir: Path, results: list, axes: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for series, xlabel in (("loss_per_epoch", "epoch"), ("loss_per_update", "update")):
        fig, ax = plt.subplots(figsize=(7, 5))
        for record in results:
            if record["error"] is not None:
                continue
            values = getattr(record["metrics"], series)
            if values:
                ax.plot(range(len(values)), values, label=_cell_label(record, axes))
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(outdir / f"loss_vs_{xlabel}.png", dpi=120)
        plt.close(fig)


# ---------------------------------------------------------------------------
# render / info
# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.fuse_color:
        r, g, b = args.fuse_color
        dataio.fuse_color_png(out / "color.png", r, g, b)
        print(f"wrote {out / 'color.png'}")
        return 0
    run_dir = Path(args.data)
    raw = run_dir / "recon_complex.raw"
    if not raw.exists():
        print(f"error: {raw} not found", file=sys.stderr)
        return 2
    data = np.fromfile(raw, dtype="<f4")
    side = int(np.sqrt(data.size // 2))
    planes = data.reshape(2, side, side)
    recon = planes[0] + 1j * planes[1]
    dataio.save_png(out / "amplitude.png", np.abs(recon))
    dataio.save_png(out / "phase.png", np.angle(recon), vmin=-np.pi, vmax=np.pi)
    print(f"rendered {out / 'amplitude.png'} and {out / 'phase.png'}")
    return 0


def cmd_info(args) -> int:
    manifest = json.loads((Path(args.data) / "manifest.json").read_text())
    kind = manifest.get("kind")
    print(f"kind: {kind}")
    print(f"format version: {manifest.get('format_version')}")
    if kind == "fp":
        print(f"mode: {manifest.get('mode')}")
        print(f"optics: {manifest.get('optics')}")
        print(f"illuminations: {len(manifest.get('wavevectors', []))}")
    arrays = manifest.get("arrays", [])
    n_meas = sum(1 for a in arrays if a["role"] == "measurement")
    print(f"arrays: {len(arrays)} ({n_meas} measurement entries)")
    prov = manifest.get("provenance", {})
    if prov:
        print(f"provenance seed: {prov.get('seed')}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_common(parser, config_required=True, data=False):
    if data:
        parser.add_argument("--data", required=True, help="dataset or run directory")
    parser.add_argument("--config", required=config_required,
                        help="JSON config file, or preset:<name>")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--deterministic", action="store_true")
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface compatibility; execution is single-process")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ptygrad",
                                     description="Gradient-based computational-imaging reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run a reconstruction")
    _add_common(p, data=True)
    p.add_argument("--resume", default=None, help="checkpoint directory to resume from")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--model", default="all",
                   choices=("all",) + _GRADCHECK_MODELS + ("quadratic",))
    p.add_argument("--norm", default="both", choices=("both", "l1", "l2"))
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true",
                   help="deliberately damage the analytic gradient (negative control)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="benchmark sweep over lr/optimizer/batch/loss axes")
    _add_common(p, data=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="re-render PNGs from raw outputs")
    p.add_argument("--data", default=None, help="reconstruction output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--fuse-color", nargs=3, metavar=("R", "G", "B"),
                   help="fuse three grayscale PNGs into an RGB PNG")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("info", help="summarize a dataset manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_info)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PtygradError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
