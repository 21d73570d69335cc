"""Pipeline configuration: TOML sections mapped onto validated dataclasses.

Every key has a default; a file only needs the keys it changes. Unknown
sections or keys are rejected so that typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import numbers
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from . import coarse
from .certify import VARIANTS
from .errors import ValidationError
from .extract import METHODS
from .gaussian import MEASURED_CM_VALUES, ChannelParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class SourceConfig:
    # "model": squeezed-state source plus channel; "fixtures": the four measured CMs
    mode: str = "model"
    sq1_db: float = -2.78
    asq1_db: float = 3.47
    sq2_db: float = -2.69
    asq2_db: float = 3.47
    eta_det: float = 0.87

    def check(self):
        if self.mode not in ("model", "fixtures"):
            raise ValidationError(f"source.mode must be 'model' or 'fixtures', got {self.mode!r}")
        if not 0 < self.eta_det <= 1:
            raise ValidationError("source.eta_det must lie in (0, 1]")


@dataclass(frozen=True)
class ChannelConfig:
    eta0: float = 0.9
    alpha_db_per_km: float = 0.2
    lengths_km: tuple = (0.0, 0.5, 1.0, 2.0)
    delta: float = 0.01

    def check(self):
        if not self.lengths_km:
            raise ValidationError("channel.lengths_km is empty")
        for length in self.lengths_km:
            ChannelParams(self.eta0, self.alpha_db_per_km, length, self.delta)

    def params(self, length_km: float) -> ChannelParams:
        return ChannelParams(self.eta0, self.alpha_db_per_km, float(length_km), self.delta)


@dataclass(frozen=True)
class BinningConfig:
    o_b: int = 4
    t_grid: tuple = coarse.DEFAULT_T_GRID
    o_a: int = 32
    alice_range: tuple = (-5.0, 5.0)
    allow_padding: bool = False

    def check(self):
        if not 2 <= self.o_b:
            raise ValidationError("binning.o_b must be at least 2")
        if not self.t_grid or any(not t > 0 for t in self.t_grid):
            raise ValidationError("binning.t_grid must be a non-empty list of positive periods")
        coarse.BinningScheme.equal_periods(self.t_grid[0], self.o_b, self.o_a, self.alice_range)


@dataclass(frozen=True)
class SolverConfig:
    d_f: int = 12
    tol: float = 1e-8
    feas_tol: float = 1e-9
    max_iter: int = 200

    def check(self):
        if self.d_f < 2:
            raise ValidationError("solver.d_f must be at least 2")
        if not (self.tol > 0 and self.feas_tol > 0 and self.max_iter >= 1):
            raise ValidationError("solver tolerances must be positive and max_iter >= 1")


@dataclass(frozen=True)
class CertifyConfig:
    variant: str = "full-assemblage"
    y_star: str = "q"

    def check(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"certify.variant must be one of {VARIANTS}")
        if self.y_star not in ("q", "p"):
            raise ValidationError("certify.y_star must be 'q' or 'p'")


@dataclass(frozen=True)
class AcquisitionConfig:
    n_samples: int = 1_000_000
    seed: int = 20240601
    sample_rate: float = 10e6
    n_blocks: int = 100

    def check(self):
        if self.n_samples < self.n_blocks or self.n_blocks < 2:
            raise ValidationError("acquisition needs n_samples >= n_blocks >= 2")
        if self.seed < 0:
            raise ValidationError("acquisition.seed must be non-negative")


@dataclass(frozen=True)
class ExtractionConfig:
    m: int = 1024
    n: int = 0              # 0: sized from h_min
    rounding: int = 100
    epsilon: float = 0.0    # 0: no leftover-hash penalty
    seed_file: str = ""     # empty: pseudo-random seed derived from acquisition.seed
    output_bits: int = 10_000_000
    max_raw_bits: int = 2_000_000_000  # caps the number of blocks per length
    method: str = "table"
    chunk_samples: int = 1 << 22
    save_bits: bool = True

    def check(self):
        if self.m < 1 or self.rounding < 1 or self.output_bits < 0 or self.n < 0 or self.max_raw_bits < 1:
            raise ValidationError("extraction sizes must be positive")
        if self.method not in METHODS:
            raise ValidationError(f"extraction.method must be one of {METHODS}")
        if not 0 <= self.epsilon < 1:
            raise ValidationError("extraction.epsilon must lie in [0, 1)")


@dataclass(frozen=True)
class TestsConfig:
    run: bool = True
    seq_len: int = 1_000_000
    alpha: float = 0.01
    max_lag: int = 100
    autocorrelation_bits: int = 10_000_000

    def check(self):
        if self.seq_len < 1 or not 0 < self.alpha < 1 or self.max_lag < 1:
            raise ValidationError("tests: need seq_len >= 1, 0 < alpha < 1, max_lag >= 1")


@dataclass(frozen=True)
class ParallelConfig:
    # lengths fan out over this many worker processes; 1 runs in-process
    workers: int = 1

    def check(self):
        if self.workers < 1:
            raise ValidationError("parallel.workers must be at least 1")


SECTIONS = {
    "source": SourceConfig,
    "channel": ChannelConfig,
    "binning": BinningConfig,
    "solver": SolverConfig,
    "certify": CertifyConfig,
    "acquisition": AcquisitionConfig,
    "extraction": ExtractionConfig,
    "tests": TestsConfig,
    "parallel": ParallelConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    binning: BinningConfig = field(default_factory=BinningConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    tests: TestsConfig = field(default_factory=TestsConfig)
    parallel: ParallelConfig = field(default_factory=ParallelConfig)

    def __post_init__(self):
        for name in SECTIONS:
            getattr(self, name).check()
        if self.source.mode == "fixtures":
            missing = [L for L in self.channel.lengths_km if float(L) not in MEASURED_CM_VALUES]
            if missing:
                raise ValidationError(
                    f"fixture replay needs lengths in {sorted(MEASURED_CM_VALUES)}, got {missing}")

    def to_dict(self) -> dict:
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}

    def override(self, section: str, **changes) -> "PipelineConfig":
        return replace(self, **{section: replace(getattr(self, section), **changes)})


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _coerce(cls, key, value):
    default = next(f.default for f in fields(cls) if f.name == key)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{cls.__name__}.{key} must be a list")
        return tuple(float(v) for v in value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(f"{cls.__name__}.{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValidationError(f"{cls.__name__}.{key} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{cls.__name__}.{key} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(f"{cls.__name__}.{key} must be a string")
    return value


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    built = {}
    for name, cls in SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ValidationError(f"[{name}] must be a table")
        known = {f.name for f in fields(cls)}
        bad = set(section) - known
        if bad:
            raise ValidationError(f"unknown keys in [{name}]: {sorted(bad)}")
        built[name] = cls(**{k: _coerce(cls, k, v) for k, v in section.items()})
    return PipelineConfig(**built)


def load_config(path=None) -> PipelineConfig:
    """Read a TOML file; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def dump_toml(cfg: PipelineConfig) -> str:
    """Minimal TOML writer for the flat sections used here."""
    lines = []
    for name, section in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for k, v in section.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, numbers.Integral):
        return str(int(v))
    return repr(float(v))
