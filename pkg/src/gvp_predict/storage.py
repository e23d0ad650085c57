"""CSV and JSON files: paths, prediction laws, manifests, Wiener-Hopf bundles."""

from __future__ import annotations

import csv
import json
import logging
import platform
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy

from . import __version__
from .errors import StorageError, ValidationError
from .grid import SamplePath, TimeGrid
from .simulation import MixedPath
from .wiener_hopf import WhSolution

if TYPE_CHECKING:
    from .prediction import PredictionLaw

_LOG = logging.getLogger(__name__)

PATH_HEADER = ("time", "G", "J", "X")
DENSITY_HEADER = ("x", "mass", "cdf")
WH_ARRAYS = ("L", "phi", "q", "ktilde", "dv")


def fmt(value: float) -> str:
    """Full precision decimal."""
    return f"{value:.17g}"


def _write_rows(path: Path, header: tuple[str, ...], columns: list[np.ndarray]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in zip(*columns, strict=True):
                writer.writerow([fmt(float(v)) for v in row])
    except OSError as err:
        raise StorageError(f"Cannot write {path}: {err}") from err


def write_path_csv(path: Path, mixed: MixedPath) -> Path:
    """``time,G,J,X`` rows, one per grid time."""
    _write_rows(
        path,
        PATH_HEADER,
        [mixed.grid.times, mixed.G.values, mixed.J.values, mixed.X.values],
    )
    _LOG.info("Wrote %d path rows to %s", len(mixed.grid), path)
    return path


def read_path_csv(path: Path) -> MixedPath:
    """A decomposed path; jumps are read off the increments of J."""
    try:
        with path.open("r", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as err:
        raise StorageError(f"Cannot read {path}: {err}") from err
    if not rows or tuple(rows[0]) != PATH_HEADER:
        raise ValidationError(f"{path}: header must be {','.join(PATH_HEADER)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    except ValueError as err:
        raise ValidationError(f"{path}: {err}") from err
    if data.ndim != 2 or data.shape[1] != len(PATH_HEADER):
        raise ValidationError(f"{path}: expected {len(PATH_HEADER)} columns per row")
    grid = TimeGrid(data[:, 0])
    G = SamplePath(grid, data[:, 1])
    J = SamplePath(grid, data[:, 2])
    x = data[:, 3]
    if np.max(np.abs(x - (G.values + J.values))) > 1e-12 * max(1.0, np.max(np.abs(x))):
        raise ValidationError(f"{path}: X differs from G + J")
    dJ = J.increments()
    hit = dJ != 0
    return MixedPath(
        G, J, SamplePath(grid, G.values + J.values), grid.times[hit].copy(), dJ[hit]
    )


def write_json(path: Path, data: Any) -> Path:
    """Indented JSON."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            json.dump(data, f, indent=2)
            f.write("\n")
    except OSError as err:
        raise StorageError(f"Cannot write {path}: {err}") from err
    return path


def read_json(path: Path) -> Any:
    """Parsed JSON."""
    try:
        with path.open("r") as f:
            return json.load(f)
    except OSError as err:
        raise StorageError(f"Cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: {err}") from err


def versions() -> dict[str, str]:
    """Package and interpreter versions for manifests."""
    return {
        "gvp_predict": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_density_csv(path: Path, law: PredictionLaw) -> Path:
    """``x,mass,cdf`` rows over the value grid of the law."""
    x, mass, cdf = law.table()
    _write_rows(path, DENSITY_HEADER, [x, mass, cdf])
    return path


def wh_bundle_dir(cache_dir: Path, grid: TimeGrid, H: float) -> Path:
    """Cache directory of one (H, grid) solution."""
    return cache_dir / f"wh_H{fmt(H)}_n{len(grid)}_T{fmt(grid.T)}"


def save_wh_bundle(directory: Path, sol: WhSolution) -> Path:
    """One CSV per array plus ``summary.json``."""
    try:
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / "grid.csv", sol.grid.times, fmt="%.17g", delimiter=",")
        for name in WH_ARRAYS:
            np.savetxt(directory / f"{name}.csv", getattr(sol, name), fmt="%.17g", delimiter=",")
    except OSError as err:
        raise StorageError(f"Cannot write Wiener-Hopf bundle {directory}: {err}") from err
    write_json(
        directory / "summary.json",
        {
            "H": sol.H,
            "n": len(sol.grid),
            "T": sol.grid.T,
            "residuals": sol.residuals,
            "bracket_defect": sol.bracket_defect,
        },
    )
    _LOG.info("Saved Wiener-Hopf bundle to %s", directory)
    return directory


def load_wh_bundle(directory: Path) -> WhSolution:
    """Inverse of save_wh_bundle."""
    summary = read_json(directory / "summary.json")
    try:
        times = np.atleast_1d(np.loadtxt(directory / "grid.csv", delimiter=","))
        n = times.size
        arrays = {
            name: np.loadtxt(directory / f"{name}.csv", delimiter=",", ndmin=1 if name in ("phi", "dv") else 2)
            for name in WH_ARRAYS
        }
    except OSError as err:
        raise StorageError(f"Cannot read Wiener-Hopf bundle {directory}: {err}") from err
    for name in ("L", "q", "ktilde"):
        arrays[name] = arrays[name].reshape(n, n)
    _LOG.info("Loaded Wiener-Hopf bundle from %s", directory)
    return WhSolution(
        grid=TimeGrid(times),
        H=float(summary["H"]),
        residuals={k: float(v) for k, v in summary["residuals"].items()},
        **arrays,
    )
