"""Experiment configuration: flat ``key = value`` files with ``[section]`` headers."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

SCENARIOS = (
    "power-vs-mu", "data-threshold", "error-convergence", "tradeoff",
    "mechanism-compare", "real-data",
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(float(v)) for v in str(text).split(",") if v.strip())


def _bools(text):
    out = []
    for v in str(text).split(","):
        v = v.strip().lower()
        if not v:
            continue
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"not a boolean: {v!r}")
        out.append(v in ("true", "1", "yes"))
    return tuple(out)


def _opt_float(text):
    text = str(text).strip().lower()
    return None if text in ("", "none", "auto") else float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment run.

    Grids (``mu``, ``epsilon``, ``n``, ``q``, ``plus``) are tuples; a run
    iterates over their Cartesian product.
    """

    scenario: str = "power-vs-mu"
    n: tuple = (10_000,)
    p: int = 50
    s0: int = 12
    sigma: float = 1.0
    mu: tuple = (0.05, 0.1, 0.15)
    epsilon: tuple = (1.0,)
    delta: float = 0.01
    r: int = 1500
    lam: Optional[float] = 0.03
    C_lambda: float = 1.0
    q: tuple = (0.2,)
    plus: tuple = (True,)
    t_fixed: Optional[float] = None
    sigma_mode: str = "oracle"
    repetitions: int = 20
    seed: int = 0
    output: str = "results.csv"
    n_mc: int = 100_000
    fdr_grid: tuple = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    workers: int = 1
    data: str = ""
    response: str = "y"
    mechanism: str = "jlt"
    memory_limit_gb: float = 4.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        for name in ("n", "mu", "epsilon", "q", "plus"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"grid {name!r} is empty")
        if self.p < 1 or not 0 <= self.s0 <= self.p:
            raise ConfigError(f"need p >= 1 and 0 <= s0 <= p, got p={self.p}, s0={self.s0}")
        if self.r < 1:
            raise ConfigError("r must be >= 1")
        if any(not 0 < q < 1 for q in self.q):
            raise ConfigError("every q must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lam must be positive")
        if self.mechanism not in ("jlt", "gaussian"):
            raise ConfigError(f"mechanism must be 'jlt' or 'gaussian', got {self.mechanism!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def override(self, **kwargs) -> "ExperimentConfig":
        """Copy with string-or-typed overrides applied (CLI flags use this)."""
        parsed = {k: _coerce(k, v) for k, v in kwargs.items() if v is not None}
        try:
            return replace(self, **parsed)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        lines = ["[experiment]"]
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(str(x).lower() if isinstance(x, bool) else repr(x) for x in v)
            lines.append(f"{k} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "n": _ints, "mu": _floats, "epsilon": _floats, "q": _floats, "plus": _bools,
    "fdr_grid": _floats, "lam": _opt_float, "t_fixed": _opt_float,
    "p": int, "s0": int, "r": int, "repetitions": int, "seed": int, "n_mc": int, "workers": int,
    "sigma": float, "delta": float, "C_lambda": float, "memory_limit_gb": float,
}
_KNOWN = {f.name for f in fields(ExperimentConfig)}


def _coerce(key, value):
    if key not in _KNOWN:
        raise ConfigError(f"unknown configuration key {key!r}")
    if not isinstance(value, str):
        if key in ("n", "mu", "epsilon", "q", "plus", "fdr_grid") and not isinstance(value, tuple):
            value = tuple(value) if hasattr(value, "__iter__") else (value,)
        return value
    parser = _PARSERS.get(key)
    try:
        return parser(value) if parser else value.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text. Keys may live in any section; later ones win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            values[key] = _coerce(key, val)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
