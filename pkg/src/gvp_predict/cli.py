"""Command-line front end: simulate, predict, verify and solve_wh."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import NoReturn

from cattrs.preconf.json import make_converter
from colorama import Fore, Style

from . import __version__
from .errors import ValidationError
from .grid import TimeGrid
from .models import CcmFbmModel, FbmModel, MfbmModel, VolterraModel
from .operators import build_operator
from .options import RunConfig, load_config
from .prediction import mixed_conditional_density
from .simulation import simulate_mixed
from .storage import (
    load_wh_bundle,
    read_path_csv,
    save_wh_bundle,
    versions,
    wh_bundle_dir,
    write_density_csv,
    write_json,
    write_path_csv,
)
from .verification import VerificationSuite
from .wiener_hopf import WhSolution, solve_wh

_LOG = logging.getLogger(__name__)

CONVERTER = make_converter()


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation code."""

    def error(self, message: str) -> NoReturn:
        """Print usage and exit 1."""
        self.print_usage(sys.stderr)
        self.exit(ValidationError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per operation."""
    parser = _Parser(
        prog="gvp-predict",
        description="Prediction laws of Gaussian Volterra processes with jumps.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-c", "--config", type=Path, help="INI configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="seeds.seed")
    parser.add_argument("--threads", type=int, help="run.threads")
    parser.add_argument("--n", type=int, help="grid.n")
    parser.add_argument("--out", help="output.directory")
    parser.add_argument("--debug", action="count", default=0, help="run.debug")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="simulate one path of X = G + J")
    predict = sub.add_parser("predict", help="prediction law of X_t given the path to u")
    predict.add_argument("--path", type=Path, help="path CSV (default output.path_csv)")
    sub.add_parser("verify", help="run the invariant and oracle checks")
    sub.add_parser("solve_wh", help="solve and cache the mfBm Wiener-Hopf equations")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """File, then --set overrides, then dedicated flags."""
    overrides = list(args.overrides)
    for flag, key in (
        ("seed", "seeds.seed"),
        ("threads", "run.threads"),
        ("n", "grid.n"),
        ("out", "output.directory"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.debug:
        overrides.append(f"run.debug={args.debug}")
    return load_config(args.config, overrides)


def wh_solution(cfg: RunConfig, *, refresh: bool = False) -> WhSolution:
    """Cached Wiener-Hopf solution for the configured grid, solved when missing."""
    grid = cfg.grid.grid()
    directory = wh_bundle_dir(Path(cfg.output.cache_dir), grid, cfg.model.H)
    if not refresh and (directory / "summary.json").exists():
        sol = load_wh_bundle(directory)
        if sol.grid == grid:
            return sol
        _LOG.warning("Cached Wiener-Hopf grid differs, solving again")
    sol = solve_wh(grid, cfg.model.H, threads=cfg.run.threads)
    save_wh_bundle(directory, sol)
    return sol


def build_model(cfg: RunConfig) -> VolterraModel:
    """Model of the configured family."""
    opt = cfg.model
    if opt.family == "fbm":
        return FbmModel(opt.H)
    if opt.family == "ccmfbm":
        return CcmFbmModel(opt.a, opt.b, opt.H)
    return MfbmModel(wh_solution(cfg))


def manifest(cfg: RunConfig, command: str, model: VolterraModel) -> dict[str, object]:
    """Run manifest: command, config echo, seed, model and versions."""
    return {
        "command": command,
        "seed": cfg.seeds.seed,
        "model": model.describe(),
        "jumps": cfg.jumps.spec().params(),
        "config": cfg.dump(),
        "versions": versions(),
    }


def _summary(ok: bool, msg: str) -> None:
    colour = Fore.GREEN if ok else Fore.RED
    print(f"{colour}{msg}{Style.RESET_ALL}")


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    """Write the path CSV and its manifest."""
    model = build_model(cfg)
    grid = cfg.grid.grid()
    path = simulate_mixed(model, cfg.jumps.spec(), grid, cfg.seeds.seed)
    out = cfg.output.out_dir
    files = [
        write_path_csv(out / cfg.output.path_csv, path),
        write_json(out / "manifest.json", manifest(cfg, "simulate", model)),
    ]
    _summary(True, f"simulated {len(grid)} points, {path.jump_times.size} jumps -> {files[0]}")
    return files


def cmd_predict(cfg: RunConfig, path_file: Path | None = None) -> list[Path]:
    """Prediction summary JSON and density CSV for the configured (u, t)."""
    out = cfg.output.out_dir
    source = path_file or out / cfg.output.path_csv
    path = read_path_csv(source)
    grid = cfg.grid.grid()
    if path.grid != grid:
        raise ValidationError(
            f"{source} has {len(path.grid)} times up to {path.grid.T}, "
            f"config grid has {len(grid)} up to {grid.T}"
        )
    model = build_model(cfg)
    spec = cfg.jumps.spec()
    pred = cfg.prediction
    op = build_operator(model, grid)
    law = mixed_conditional_density(
        op,
        spec,
        path,
        pred.u,
        pred.t,
        tail_tol=pred.tail_tol,
        closed_form=pred.closed_form,
        cells=pred.cells,
        width=pred.width,
    )
    tau = pred.t - pred.u
    summary = {
        "u": pred.u,
        "t": pred.t,
        "m_hat": law.m_hat,
        "r_hat_tt": law.variance,
        "lambda_term_mean": spec.drift(tau),
        "lambda_term_var": spec.variance(tau),
        "N_max": int(law.meta["n_max"]),
        "tail_mass": law.meta["tail_mass"],
        "mass_defect": law.meta["mass_defect"],
    }
    files = [
        write_json(out / "prediction.json", summary),
        write_density_csv(out / "density.csv", law),
        write_json(out / "manifest.json", manifest(cfg, "predict", model)),
    ]
    _summary(True, f"m_hat={law.m_hat:.6g} r_hat={law.variance:.6g} N_max={summary['N_max']}")
    return files


def cmd_verify(cfg: RunConfig) -> int:
    """Run the suite and write ``report.json``; 2 on any failed check."""
    model = build_model(cfg)
    pred = cfg.prediction
    grid = cfg.grid.grid()
    times = sorted({t for t in (0.5 * (pred.u + pred.t), pred.t, grid.T) if t > pred.u})
    times = [t for t in times if _on_grid(grid, t)] or [pred.t]
    suite = VerificationSuite(
        model=model,
        spec=cfg.jumps.spec(),
        grid=grid,
        u=pred.u,
        times=times,
        tolerance=pred.tol,
        n_paths=cfg.seeds.n_paths,
        seed=cfg.seeds.seed,
        closed_form=pred.closed_form and isinstance(model, FbmModel),
        threads=cfg.run.threads,
    )
    results = suite.run()
    write_json(
        cfg.output.out_dir / "report.json",
        {
            "passed": suite.passed,
            "checks": CONVERTER.unstructure(results),
            "manifest": manifest(cfg, "verify", model),
        },
    )
    failed = [r.check for r in results if not r.passed]
    _summary(not failed, f"{len(results) - len(failed)}/{len(results)} checks passed")
    for name in failed:
        _summary(False, f"  failed: {name}")
    return 0 if not failed else 2


def _on_grid(grid: TimeGrid, t: float) -> bool:
    try:
        grid.index(t)
    except ValidationError:
        return False
    return True


def cmd_solve_wh(cfg: RunConfig) -> Path:
    """Solve (or load) the Wiener-Hopf bundle and write a residual summary."""
    if cfg.model.family != "mfbm":
        raise ValidationError(f"solve_wh needs model.family=mfbm, got {cfg.model.family!r}")
    sol = wh_solution(cfg)
    path = write_json(
        cfg.output.out_dir / "wh_summary.json",
        {
            "H": sol.H,
            "n": len(sol.grid),
            "residuals": sol.residuals,
            "bracket_defect": sol.bracket_defect,
        },
    )
    worst = max(sol.residuals.values(), default=0.0)
    _summary(True, f"Wiener-Hopf residual {worst:.3g}, bracket defect {sol.bracket_defect:.3g}")
    return path


def run_command(args: argparse.Namespace) -> int:
    """Dispatch a parsed command line; returns the exit code."""
    cfg = config_from_args(args)
    if args.command == "simulate":
        cmd_simulate(cfg)
    elif args.command == "predict":
        cmd_predict(cfg, args.path)
    elif args.command == "verify":
        return cmd_verify(cfg)
    elif args.command == "solve_wh":
        cmd_solve_wh(cfg)
    return 0
