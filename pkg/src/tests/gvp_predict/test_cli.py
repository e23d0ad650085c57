"""Command line."""

import logging
from pathlib import Path

import numpy as np
import pytest

from gvp_predict.__main__ import main_loop
from gvp_predict.cli import build_parser, config_from_args
from gvp_predict.storage import read_json


def _args(tmp_path: Path, *extra: str) -> list[str]:
    return [
        "--out",
        str(tmp_path / "out"),
        "--set",
        f"output.cache_dir={tmp_path / 'cache'}",
        "--n",
        "16",
        *extra,
    ]


def test_flags_override_config(tmp_path: Path) -> None:
    """Dedicated flags win over --set, which wins over the file."""
    ini = tmp_path / "run.ini"
    ini.write_text("[seeds]\nseed = 1\n[grid]\nn = 32\n")
    args = build_parser().parse_args(
        ["-c", str(ini), "--set", "seeds.seed=2", "--seed", "3", "--threads", "2", "verify"]
    )
    cfg = config_from_args(args)
    assert cfg.seeds.seed == 3
    assert cfg.grid.n == 32
    assert cfg.run.threads == 2


def test_version(capsys: pytest.CaptureFixture[str]) -> None:
    """--version prints and exits."""
    with pytest.raises(SystemExit) as info:
        main_loop(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip()


def test_simulate_then_predict(tmp_path: Path) -> None:
    """predict reads the path written by simulate."""
    jumps = ["--set", "jumps.intensity=5", "--set", "jumps.m=0.1", "--set", "jumps.s2=0.04"]
    assert main_loop([*_args(tmp_path, *jumps), "--seed", "5", "simulate"]) == 0
    out = tmp_path / "out"
    assert (out / "path.csv").exists()
    assert read_json(out / "manifest.json")["command"] == "simulate"

    assert main_loop([*_args(tmp_path, *jumps), "predict"]) == 0
    summary = read_json(out / "prediction.json")
    assert summary["u"] == 0.5
    assert summary["t"] == 0.75
    assert summary["r_hat_tt"] > 0
    assert summary["lambda_term_mean"] == pytest.approx(5 * 0.25 * 0.1)
    assert summary["tail_mass"] <= 1e-8
    assert (out / "density.csv").read_text().startswith("x,mass,cdf\n")
    manifest = read_json(out / "manifest.json")
    assert manifest["model"] == {"family": "fbm", "H": 0.75}
    assert manifest["jumps"]["intensity"] == 5.0


def test_predict_on_another_grid(tmp_path: Path) -> None:
    """A path from a different grid is a validation error."""
    assert main_loop([*_args(tmp_path), "simulate"]) == 0
    assert main_loop([*_args(tmp_path), "--n", "32", "predict"]) == 1


def test_exit_codes(tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    """1 for validation, 3 for I/O."""
    caplog.set_level(logging.ERROR)
    assert main_loop([*_args(tmp_path, "--set", "model.H=2"), "simulate"]) == 1
    assert "ValidationError" in caplog.text
    missing = tmp_path / "none.csv"
    assert main_loop([*_args(tmp_path), "predict", "--path", str(missing)]) == 3
    assert main_loop([*_args(tmp_path), "solve_wh"]) == 1


def test_solve_wh_caches(tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
    """The second call loads the bundle instead of solving."""
    caplog.set_level(logging.INFO)
    mfbm = _args(tmp_path, "--set", "model.family=mfbm")
    assert main_loop([*mfbm, "solve_wh"]) == 0
    summary = read_json(tmp_path / "out" / "wh_summary.json")
    assert summary["n"] == 16
    assert max(summary["residuals"].values()) <= 1e-8
    caplog.clear()
    assert main_loop([*mfbm, "solve_wh"]) == 0
    assert "Loaded Wiener-Hopf bundle" in caplog.text
    assert main_loop([*mfbm, "simulate"]) == 0


@pytest.mark.slow
def test_verify_writes_report(tmp_path: Path) -> None:
    """The default configuration passes every check and exits 0."""
    out = tmp_path / "out"
    code = main_loop(["--out", str(out), "--set", f"output.cache_dir={tmp_path / 'cache'}", "verify"])
    report = read_json(out / "report.json")
    failed = [c["check"] for c in report["checks"] if not c["passed"]]
    assert failed == []
    assert report["passed"] is True
    assert code == 0
    checks = {c["check"] for c in report["checks"]}
    assert {"adjoint_round_trip", "martingale_round_trip", "mc_mean", "mc_ks"} <= checks
    assert all({"value", "reference", "tolerance", "passed"} <= set(c) for c in report["checks"])


def test_verify_failure_exit_code(tmp_path: Path) -> None:
    """A failed check exits 2."""
    code = main_loop(
        [*_args(tmp_path, "--set", "seeds.n_paths=50", "--set", "prediction.tol=0"), "verify"]
    )
    report = read_json(tmp_path / "out" / "report.json")
    assert not report["passed"]
    assert code == 2


def test_usage_error_exit_code(capsys: pytest.CaptureFixture[str]) -> None:
    """Unknown flags and commands exit 1 like other invalid input."""
    for argv in (["--bogus", "simulate"], ["forecast"], []):
        with pytest.raises(SystemExit) as info:
            main_loop(argv)
        assert info.value.code == 1
    assert "usage:" in capsys.readouterr().err


def _table(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_no_jumps_path(tmp_path: Path) -> None:
    """With intensity 0 the J column is zero and X equals G."""
    assert main_loop([*_args(tmp_path), "simulate"]) == 0
    rows = _table(tmp_path / "out" / "path.csv")
    assert rows.shape == (16, 4)
    assert not np.any(rows[:, 2])
    assert np.array_equal(rows[:, 3], rows[:, 1])


def test_predict_at_u_is_a_unit_atom(tmp_path: Path) -> None:
    """u = t puts all mass in the cell holding the observed X_u."""
    jumps = ["--set", "jumps.intensity=5", "--set", "jumps.m=0.1", "--set", "jumps.s2=0.04"]
    assert main_loop([*_args(tmp_path, *jumps), "simulate"]) == 0
    at_u = ["--set", "prediction.u=0.5", "--set", "prediction.t=0.5"]
    assert main_loop([*_args(tmp_path, *jumps, *at_u), "predict"]) == 0
    out = tmp_path / "out"
    x_u = _table(out / "path.csv")[7, 3]
    summary = read_json(out / "prediction.json")
    assert summary["r_hat_tt"] == 0.0
    assert summary["N_max"] == 0
    assert summary["m_hat"] == pytest.approx(x_u, abs=1e-12)
    density = _table(out / "density.csv")
    x, mass, cdf = density.T
    assert mass.sum() == pytest.approx(1.0, abs=1e-12)
    peak = int(np.argmax(mass))
    assert mass[peak] == pytest.approx(1.0, abs=1e-12)
    assert abs(x[peak] - x_u) <= 0.5 * (x[1] - x[0])
    assert cdf[peak - 1] == pytest.approx(0.0, abs=1e-12)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-12)


def test_reruns_are_byte_identical(tmp_path: Path) -> None:
    """The same seed writes the same path and prediction files."""
    jumps = ["--set", "jumps.intensity=5", "--set", "jumps.m=0.1", "--set", "jumps.s2=0.04"]
    outputs = []
    for run in ("a", "b"):
        base = tmp_path / run
        assert main_loop([*_args(base, *jumps), "--seed", "9", "simulate"]) == 0
        assert main_loop([*_args(base, *jumps), "predict"]) == 0
        outputs.append(
            [(base / "out" / name).read_bytes() for name in ("path.csv", "density.csv", "prediction.json")]
        )
    assert outputs[0] == outputs[1]
