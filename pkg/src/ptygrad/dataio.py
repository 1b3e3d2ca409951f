"""Dataset, checkpoint, and image serialization.

On-disk layout: a ``manifest.json`` plus one ``.raw`` file per array. Raw
files are 32-bit little-endian floats, row-major; complex arrays are stored
as two planes (real, imaginary) with a leading axis of 2 and flagged
``"complex": true`` in the manifest. PNGs are derived views only; nothing in
the pipeline reads them back as numeric input.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .fields import OpticsConfig
from .optim import OptState
from .simdata import Dataset, SimDataset, SpiDataset

FORMAT_VERSION = "1"
_DTYPE = "<f4"


def _write_raw(path: Path, array: np.ndarray) -> None:
    np.asarray(array, dtype=_DTYPE).tofile(path)


def _read_raw(path: Path, shape) -> np.ndarray:
    data = np.fromfile(path, dtype=_DTYPE)
    expected = int(np.prod(shape))
    if data.size != expected:
        raise DimensionError(f"{path}: expected {expected} samples, found {data.size}")
    return data.reshape(shape)


def _array_entry(name: str, array: np.ndarray, role: str, index: int | None = None) -> dict:
    entry = {
        "name": name,
        "file": f"{name}.raw",
        "shape": list(array.shape),
        "dtype": "float32",
        "complex": bool(np.iscomplexobj(array)),
        "role": role,
    }
    if index is not None:
        entry["index"] = index
    return entry


def _planes(array: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(array):
        return np.stack([np.real(array), np.imag(array)])
    return np.asarray(array)


def _unplanes(planes: np.ndarray, is_complex: bool) -> np.ndarray:
    if is_complex:
        return planes[0] + 1j * planes[1]
    return planes


def save_dataset(dataset, outdir: str | Path) -> Path:
    """Write a dataset directory (manifest.json + raw planes); returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"format_version": FORMAT_VERSION,
                      "provenance": dataset.provenance}
    arrays: list[tuple[str, np.ndarray, dict]] = []

    if isinstance(dataset, Dataset):
        cfg = dataset.cfg
        manifest["kind"] = "fp"
        manifest["mode"] = dataset.mode
        manifest["optics"] = {
            "lambda_um": cfg.lambda_um, "na": cfg.na, "n_high": cfg.n_high,
            "stride": cfg.stride, "px_high": cfg.px_high,
        }
        manifest["wavevectors"] = [list(w) for w in cfg.wavevectors]
        for i, m in enumerate(dataset.measurements):
            arrays.append((f"meas_{i:04d}", np.asarray(m), {"role": "measurement", "index": i}))
        if dataset.ground_truth is not None:
            arrays.append(("ground_truth", dataset.ground_truth.complex,
                           {"role": "ground_truth"}))
    elif isinstance(dataset, SpiDataset):
        manifest["kind"] = "spi"
        manifest["side"] = dataset.side
        for i, p in enumerate(dataset.patterns):
            arrays.append((f"pattern_{i:04d}", np.asarray(p), {"role": "pattern", "index": i}))
        arrays.append(("measurements", np.asarray(dataset.measurements, dtype=np.float64),
                       {"role": "measurement"}))
        if dataset.ground_truth is not None:
            arrays.append(("ground_truth", np.asarray(dataset.ground_truth),
                           {"role": "ground_truth"}))
    elif isinstance(dataset, SimDataset):
        manifest["kind"] = "sim"
        manifest["side"] = dataset.side
        for i, p in enumerate(dataset.patterns):
            arrays.append((f"pattern_{i:04d}", np.asarray(p), {"role": "pattern", "index": i}))
        for i, m in enumerate(dataset.measurements):
            arrays.append((f"meas_{i:04d}", np.asarray(m), {"role": "measurement", "index": i}))
        arrays.append(("psf_inc", np.asarray(dataset.psf_inc), {"role": "psf"}))
        if dataset.ground_truth is not None:
            arrays.append(("ground_truth", np.asarray(dataset.ground_truth),
                           {"role": "ground_truth"}))
    else:
        raise ConfigError(f"cannot serialize {type(dataset).__name__}")

    entries = []
    for name, array, meta in arrays:
        planes = _planes(array)
        entry = _array_entry(name, array, meta["role"], meta.get("index"))
        entry["shape"] = list(planes.shape)
        _write_raw(outdir / entry["file"], planes)
        entries.append(entry)
    manifest["arrays"] = entries
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset(indir: str | Path):
    """Read back a dataset directory written by :func:`save_dataset`."""
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported format version {manifest.get('format_version')!r}")

    loaded: dict[str, np.ndarray] = {}
    by_role: dict[str, list] = {}
    for entry in manifest["arrays"]:
        path = indir / entry["file"]
        if not path.exists():
            raise ConfigError(f"missing referenced file {path}")
        planes = _read_raw(path, entry["shape"])
        arr = _unplanes(planes, entry["complex"])
        loaded[entry["name"]] = arr
        by_role.setdefault(entry["role"], []).append((entry.get("index", 0), arr))

    def role_list(role):
        return [a for _, a in sorted(by_role.get(role, []), key=lambda t: t[0])]

    kind = manifest["kind"]
    gt = loaded.get("ground_truth")
    if kind == "fp":
        cfg = OpticsConfig(wavevectors=tuple(map(tuple, manifest["wavevectors"])),
                           **manifest["optics"])
        from .models import FpObject

        return Dataset(cfg=cfg, mode=manifest["mode"],
                       measurements=role_list("measurement"),
                       ground_truth=FpObject.from_complex(gt) if gt is not None else None,
                       provenance=manifest.get("provenance", {}))
    if kind == "spi":
        return SpiDataset(patterns=role_list("pattern"),
                          measurements=[float(m) for m in loaded["measurements"]],
                          side=manifest["side"], ground_truth=gt,
                          provenance=manifest.get("provenance", {}))
    if kind == "sim":
        return SimDataset(patterns=role_list("pattern"),
                          psf_inc=loaded["psf_inc"],
                          measurements=role_list("measurement"),
                          side=manifest["side"], ground_truth=gt,
                          provenance=manifest.get("provenance", {}))
    raise ConfigError(f"unknown dataset kind {kind!r}")


def save_checkpoint(outdir: str | Path, params: np.ndarray, state: OptState) -> Path:
    """Persist parameters and optimizer accumulators (same raw-plane format)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"format_version": FORMAT_VERSION, "kind": "checkpoint",
                "step_count": state.step_count, "arrays": []}
    for name, arr in (("params", params), ("moment1", state.m), ("moment2", state.v)):
        entry = _array_entry(name, arr, role=name)
        _write_raw(outdir / entry["file"], _planes(arr))
        manifest["arrays"].append(entry)
    path = outdir / "checkpoint.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(indir: str | Path) -> tuple[np.ndarray, OptState]:
    indir = Path(indir)
    path = indir / "checkpoint.json"
    if not path.exists():
        raise ConfigError(f"{indir} is not a checkpoint directory (no checkpoint.json)")
    manifest = json.loads(path.read_text())
    if manifest.get("kind") != "checkpoint":
        raise ConfigError("not a checkpoint directory")
    arrs = {}
    for entry in manifest["arrays"]:
        planes = _read_raw(indir / entry["file"], entry["shape"])
        arrs[entry["name"]] = _unplanes(planes, entry["complex"]).astype(np.float64)
    state = OptState(m=arrs["moment1"], v=arrs["moment2"],
                     step_count=int(manifest["step_count"]))
    return arrs["params"], state


def save_png(path: str | Path, image: np.ndarray, vmin=None, vmax=None) -> None:
    """Render a real array to an 8-bit grayscale PNG (derived view only)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    img = np.asarray(image, dtype=np.float64)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    scaled = np.zeros_like(img) if hi <= lo else np.clip((img - lo) / (hi - lo), 0, 1)
    plt.imsave(str(path), scaled, cmap="gray", vmin=0.0, vmax=1.0)


def fuse_color_png(out_path: str | Path, red: str | Path, green: str | Path,
                   blue: str | Path) -> None:
    """Stack three grayscale PNGs into one RGB PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    channels = []
    for p in (red, green, blue):
        img = plt.imread(str(p))
        if img.ndim == 3:
            img = img[..., 0]
        channels.append(img)
    shapes = {c.shape for c in channels}
    if len(shapes) != 1:
        raise DimensionError(f"channel shapes differ: {shapes}")
    rgb = np.stack(channels, axis=-1)
    plt.imsave(str(out_path), np.clip(rgb, 0, 1))
