"""Run configuration: INI sections structured into dataclasses by cattrs."""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from cattrs import transform_error
from cattrs.errors import BaseValidationError
from cattrs.preconf.json import make_converter

from .errors import StorageError, ValidationError
from .grid import TimeGrid
from .jumps import JumpDist, JumpSpec, NormalJumps, TwoPointJumps, UniformJumps
from .kernels import check_ccm, check_hurst

CONVERTER = make_converter(forbid_extra_keys=True)
_LOG = logging.getLogger(__name__)

MAX_GRID = 4096
FAMILIES = ("fbm", "ccmfbm", "mfbm")
SECTIONS = ("run", "model", "jumps", "grid", "prediction", "seeds", "output")


def _structure_bool(value: Any, _: type) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


CONVERTER.register_structure_hook(bool, _structure_bool)


@dataclass
class ModelOptions:
    """Gaussian part."""

    family: str = "fbm"
    H: float = 0.75
    a: float = 1.0
    b: float = 0.5
    wh_grid_n: int = 0
    """mfBm Wiener-Hopf grid size; 0 uses grid.n."""

    def __post_init__(self) -> None:
        """Validate."""
        if self.family not in FAMILIES:
            raise ValidationError(f"model.family must be one of {FAMILIES}, got {self.family!r}")
        check_hurst(self.H)
        if self.family == "ccmfbm":
            check_ccm(self.a, self.H)
        if self.family == "mfbm" and not 0.5 < self.H < 1:
            raise ValidationError(f"model.H must lie in (1/2, 1) for mfbm, got {self.H}")
        if not 0 <= self.wh_grid_n <= MAX_GRID:
            raise ValidationError(f"model.wh_grid_n must be in [0, {MAX_GRID}]")


@dataclass
class JumpOptions:
    """Compound Poisson part."""

    intensity: float = 0.0
    dist: str = "normal"
    m: float = 0.0
    s2: float = 1.0
    x1: float = 1.0
    p: float = 0.5
    x2: float = -1.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        """Validate."""
        self.spec()

    def spec(self) -> JumpSpec:
        """The compound Poisson jump part."""
        dist: JumpDist
        if self.dist == "normal":
            dist = NormalJumps(self.m, self.s2)
        elif self.dist == "two_point":
            dist = TwoPointJumps(self.x1, self.p, self.x2)
        elif self.dist == "uniform":
            dist = UniformJumps(self.lo, self.hi)
        else:
            raise ValidationError(
                f"jumps.dist must be normal, two_point or uniform, got {self.dist!r}"
            )
        return JumpSpec(self.intensity, dist)


@dataclass
class GridOptions:
    """Observation grid T/n, ..., T."""

    T: float = 1.0
    n: int = 128

    def __post_init__(self) -> None:
        """Validate."""
        if not self.T > 0:
            raise ValidationError(f"grid.T must be positive, got {self.T}")
        if not 1 <= self.n <= MAX_GRID:
            raise ValidationError(f"grid.n must be in [1, {MAX_GRID}], got {self.n}")

    def grid(self) -> TimeGrid:
        """The uniform grid."""
        return TimeGrid.uniform(self.T, self.n)


@dataclass
class PredictionOptions:
    """Prediction times and law discretisation."""

    u: float = 0.5
    t: float = 0.75
    width: float = 8.0
    """Value grid half-width in conditional standard deviations."""
    cells: int = 2001
    tail_tol: float = 1e-8
    tol: float = 0.02
    """Relative tolerance of the oracle checks."""
    closed_form: bool = False

    def __post_init__(self) -> None:
        """Validate."""
        if not 0 <= self.u <= self.t:
            raise ValidationError(f"prediction needs 0 <= u <= t, got u={self.u}, t={self.t}")
        if self.width <= 0 or self.cells < 1:
            raise ValidationError("prediction.width and prediction.cells must be positive")
        if self.tail_tol <= 0:
            raise ValidationError(f"prediction.tail_tol must be positive, got {self.tail_tol}")
        if self.tol < 0:
            raise ValidationError(f"prediction.tol must be >= 0, got {self.tol}")


@dataclass
class SeedOptions:
    """Random streams."""

    seed: int = 0
    n_paths: int = 100_000

    def __post_init__(self) -> None:
        """Validate."""
        if self.seed < 0:
            raise ValidationError(f"seeds.seed must be >= 0, got {self.seed}")
        if self.n_paths < 1:
            raise ValidationError(f"seeds.n_paths must be >= 1, got {self.n_paths}")


@dataclass
class OutputOptions:
    """Output locations."""

    directory: str = "out"
    path_csv: str = "path.csv"
    cache_dir: str = ".gvp_cache"

    @property
    def out_dir(self) -> Path:
        """Output directory."""
        return Path(self.directory)


@dataclass
class RunOptions:
    """Process-wide settings."""

    debug: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        """Validate."""
        if self.threads < 1:
            raise ValidationError(f"run.threads must be >= 1, got {self.threads}")


@dataclass
class RunConfig:
    """Complete run configuration."""

    run: RunOptions = field(default_factory=RunOptions)
    model: ModelOptions = field(default_factory=ModelOptions)
    jumps: JumpOptions = field(default_factory=JumpOptions)
    grid: GridOptions = field(default_factory=GridOptions)
    prediction: PredictionOptions = field(default_factory=PredictionOptions)
    seeds: SeedOptions = field(default_factory=SeedOptions)
    output: OutputOptions = field(default_factory=OutputOptions)

    def __post_init__(self) -> None:
        """Cross-section checks."""
        grid = self.grid.grid()
        for name in ("u", "t"):
            value = getattr(self.prediction, name)
            if value > grid.T:
                raise ValidationError(f"prediction.{name}={value} exceeds grid.T={grid.T}")
            try:
                grid.index(value)
            except ValidationError as err:
                raise ValidationError(f"prediction.{name}: {err}") from err
        if self.model.family == "mfbm" and self.model.wh_grid_n not in (0, self.grid.n):
            raise ValidationError(
                f"model.wh_grid_n={self.model.wh_grid_n} must equal grid.n={self.grid.n}"
            )

    def dump(self) -> dict[str, Any]:
        """Unstructured copy for manifests."""
        return CONVERTER.unstructure(self)


def parse_override(text: str) -> tuple[str, str, str]:
    """Split ``section.key=value``."""
    key, sep, value = text.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or not section or not name:
        raise ValidationError(f"Override must look like section.key=value, got {text!r}")
    return section, name, value.strip()


def read_ini(path: Path) -> dict[str, dict[str, str]]:
    """Sections of an INI file, keys case preserved."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        with path.open("r") as f:
            parser.read_file(f)
    except OSError as err:
        raise StorageError(f"Cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ValidationError(f"Config {path}: {err}") from err
    return {name: dict(parser[name]) for name in parser.sections()}


def load_config(path: Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the file, then the overrides in order."""
    data: dict[str, dict[str, str]] = read_ini(path) if path else {}
    for text in overrides or []:
        section, name, value = parse_override(text)
        data.setdefault(section, {})[name] = value
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"Unknown config sections: {sorted(unknown)}")
    try:
        cfg = CONVERTER.structure(data, RunConfig)
    except BaseValidationError as err:
        domain = _domain_error(err)
        if domain is not None:
            raise domain from err
        raise ValidationError("; ".join(transform_error(err))) from err
    _LOG.debug("config: %s", cfg)
    return cfg


def _domain_error(err: BaseException) -> ValidationError | None:
    """First ValidationError raised by a section's own checks."""
    if isinstance(err, ValidationError):
        return err
    for sub in getattr(err, "exceptions", ()):
        found = _domain_error(sub)
        if found is not None:
            return found
    return None
