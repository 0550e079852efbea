"""Experiment configuration files and result tables.

Configuration is an INI file with fixed sections; list values are
comma-separated.  Example::

    [system]
    g = cos(m)
    h = 0.75
    epsilon = 0.1, 0.01, 0.001
    x0 = 0
    m0 = 0
    driver = fractional

    [grid]
    T = 1
    N = 16, 32, 64, 128, 256, 512

    [experiment]
    phi = tanh
    eta = 0.05, 0.1, 0.25

    [mc]
    outer = 200
    inner = 500
    base_seed = 12345

    [output]
    dir = results

Unknown sections or keys are rejected so typos do not silently fall back to
defaults.

Result tables are CSV files: ``#``-prefixed ``key=value`` metadata lines,
one header row, data rows with reals written to 17 significant digits, and
optional ``#``-prefixed footer lines (e.g. a fitted slope).
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .coeffexpr import CoeffExpr, parse
from .streams import check_seed

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENTS",
    "load_config",
    "loads_config",
    "ResultTable",
    "write_table",
    "read_table",
    "format_real",
]

EXPERIMENTS = ("simulate", "ap-diagram", "rate-fit", "eps-sweep", "brownian-compare", "variation-diag")

_SCHEMA = {
    "system": {"g", "h", "epsilon", "x0", "m0", "driver", "quad_order"},
    "grid": {"t", "n"},
    "experiment": {"kind", "phi", "eta", "fd_step", "x_grid", "control_variate"},
    "mc": {"outer", "inner", "base_seed", "threads"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    g: str
    h: float = 0.75
    epsilon: tuple = (0.1, 0.01, 0.001)
    x0: float = 0.0
    m0: float = 0.0
    driver: str = "fractional"
    quad_order: int = 40
    T: float = 1.0
    N: tuple = (16, 32, 64, 128, 256, 512)
    experiment: str | None = None
    phi: str = "tanh"
    eta: tuple = (0.05, 0.1, 0.25)
    fd_step: float = 1e-4
    x_grid: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    control_variate: bool = True
    outer: int = 200
    inner: int = 500
    base_seed: int = 0
    threads: int | None = None
    output: str = "results"
    expr: CoeffExpr = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.expr is None:
            object.__setattr__(self, "expr", parse(self.g))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def digest(self) -> str:
        """SHA-256 of the canonical settings (output location excluded)."""
        d = asdict(self)
        for k in ("expr", "output", "threads"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def _floats(name, raw) -> tuple:
    try:
        vals = tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{name}: expected a comma-separated list of numbers, got {raw!r}") from None
    if not vals:
        raise ConfigError(f"{name}: list must not be empty")
    return vals


def _ints(name, raw) -> tuple:
    vals = tuple(v.strip() for v in raw.split(",") if v.strip())
    if not vals:
        raise ConfigError(f"{name}: list must not be empty")
    try:
        return tuple(int(v) for v in vals)  # exact, also beyond 2**53
    except ValueError:
        raise ConfigError(f"{name}: expected integers, got {raw!r}") from None


def _one(name, vals):
    if len(vals) != 1:
        raise ConfigError(f"{name}: expected a single value")
    return vals[0]


def _bool(name, raw) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {raw!r}")


def loads_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=(";",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        extra = set(cp[sec]) - _SCHEMA[sec]
        if extra:
            raise ConfigError(f"{source}: unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")
    if not cp.has_option("system", "g"):
        raise ConfigError(f"{source}: [system] g is required")

    kw = {}

    def get(sec, key):
        return cp.get(sec, key) if cp.has_option(sec, key) else None

    kw["g"] = get("system", "g").strip()
    try:
        parse(kw["g"])
    except ValueError as exc:
        raise ConfigError(f"system.g: {exc}") from None

    conv = [
        ("system", "h", "h", lambda n, r: _one(n, _floats(n, r))),
        ("system", "epsilon", "epsilon", _floats),
        ("system", "x0", "x0", lambda n, r: _one(n, _floats(n, r))),
        ("system", "m0", "m0", lambda n, r: _one(n, _floats(n, r))),
        ("system", "driver", "driver", lambda n, r: r.strip()),
        ("system", "quad_order", "quad_order", lambda n, r: _one(n, _ints(n, r))),
        ("grid", "t", "T", lambda n, r: _one(n, _floats(n, r))),
        ("grid", "n", "N", _ints),
        ("experiment", "kind", "experiment", lambda n, r: r.strip()),
        ("experiment", "phi", "phi", lambda n, r: r.strip()),
        ("experiment", "eta", "eta", _floats),
        ("experiment", "fd_step", "fd_step", lambda n, r: _one(n, _floats(n, r))),
        ("experiment", "x_grid", "x_grid", _floats),
        ("experiment", "control_variate", "control_variate", _bool),
        ("mc", "outer", "outer", lambda n, r: _one(n, _ints(n, r))),
        ("mc", "inner", "inner", lambda n, r: _one(n, _ints(n, r))),
        ("mc", "base_seed", "base_seed", lambda n, r: _one(n, _ints(n, r))),
        ("mc", "threads", "threads", lambda n, r: _one(n, _ints(n, r))),
        ("output", "dir", "output", lambda n, r: r.strip()),
    ]
    for sec, key, attr, fn in conv:
        raw = get(sec, key)
        if raw is not None:
            kw[attr] = fn(f"{sec}.{key}", raw)
    if kw.get("driver") == "brownian" and "h" not in kw:
        kw["h"] = 0.5
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    from .stats import TEST_FUNCTIONS

    if cfg.driver not in ("fractional", "brownian"):
        raise ConfigError(f"system.driver: must be 'fractional' or 'brownian', got {cfg.driver!r}")
    if cfg.driver == "fractional" and not 0.5 < cfg.h < 1.0:
        raise ConfigError(f"system.h: h must be > 0.5 (and < 1) for a fractional driver, got {cfg.h}")
    if cfg.driver == "brownian" and cfg.h != 0.5:
        raise ConfigError(f"system.h: the brownian driver needs h = 0.5, got {cfg.h}")
    if any(not 0.0 <= e <= 1.0 for e in cfg.epsilon):
        raise ConfigError(f"system.epsilon: values must lie in [0, 1] (0 = limit), got {cfg.epsilon}")
    for name in ("x0", "m0", "T", "fd_step"):
        if not math.isfinite(getattr(cfg, name)):
            raise ConfigError(f"{name}: must be finite")
    if cfg.T <= 0:
        raise ConfigError(f"grid.T: must be positive, got {cfg.T}")
    if any(n < 1 for n in cfg.N):
        raise ConfigError(f"grid.N: step counts must be positive, got {cfg.N}")
    if cfg.quad_order < 2:
        raise ConfigError(f"system.quad_order: must be >= 2, got {cfg.quad_order}")
    if cfg.experiment is not None and cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment.kind: unknown experiment {cfg.experiment!r}")
    if cfg.phi not in TEST_FUNCTIONS:
        raise ConfigError(f"experiment.phi: unknown test function {cfg.phi!r}")
    if any(e <= 0 for e in cfg.eta):
        raise ConfigError(f"experiment.eta: thresholds must be positive, got {cfg.eta}")
    if cfg.fd_step <= 0:
        raise ConfigError(f"experiment.fd_step: must be positive, got {cfg.fd_step}")
    if cfg.outer < 1 or cfg.inner < 1:
        raise ConfigError("mc.outer and mc.inner must be positive")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError(f"mc.threads: must be positive, got {cfg.threads}")
    try:
        check_seed(cfg.base_seed)
    except ValueError as exc:
        raise ConfigError(f"mc.base_seed: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text(), source=str(path))


# --- result tables ------------------------------------------------------------


def format_real(v) -> str:
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    footer: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_real(v) for v in row])
        for k, v in self.footer.items():
            buf.write(f"# {k}={format_real(v)}\n")
        return buf.getvalue()


def write_table(table: ResultTable, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{table.name}.csv"
    path.write_text(table.to_csv())
    return path


def _cell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(path) -> ResultTable:
    path = Path(path)
    lines = path.read_text().splitlines()
    meta, footer, body = {}, {}, []
    seen_header = False
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            (footer if seen_header else meta)[k] = v if not seen_header else _cell(v)
        else:
            seen_header = True
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ValueError(f"{path}: no header row")
    return ResultTable(path.stem, rows[0], [[_cell(c) for c in r] for r in rows[1:]], meta, footer)
