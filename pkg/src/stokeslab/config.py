"""Experiment configuration: ``key = value`` lines with ``#`` comments.

Every key has a default; unknown keys and invalid values are rejected with
:class:`ConfigError`, which names the offending key.  Validation happens in
key order, so the first failing key is the one reported.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .grid import build_grid, build_mask, parse_rect

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the first failing entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by all subcommands.

    ``lambdas`` and ``T_grid`` are optional explicit sample lists; when
    empty, cutoffs are eigenvalue midpoints over the first ``spec_modes``
    modes and horizons are ``T_count`` geometric points on
    ``[floor, T_span * floor]`` above the resolution floor.
    """

    N: int = 48
    m: int = 200
    omega: str = "0,0.3,0,0.3"
    lambdas: tuple[float, ...] = ()
    spec_modes: int = 100
    lambda_max: float = 1000.0
    T_grid: tuple[float, ...] = ()
    T_count: int = 10
    T_span: float = 4.0
    T_list: tuple[float, ...] = (0.5, 0.25, 0.125)
    eps: float = 0.3
    ratio: float = 0.5
    tol_target: float = 1e-6
    eps_pen: float = 1e-10
    kappa: float = 1.1
    draws: int = 200
    seed: int = 0
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        """Check every key in declaration order; return ``self``."""

        def need(key, ok, msg):
            if not ok:
                raise ConfigError(key, msg)

        need("N", isinstance(self.N, int) and self.N >= 3, f"must be an integer >= 3, got {self.N}")
        need("m", isinstance(self.m, int) and 1 <= self.m <= self.N**2,
             f"must be an integer in [1, N^2 = {self.N**2}], got {self.m}")
        try:
            build_mask(build_grid(self.N), parse_rect(self.omega))
        except ValueError as exc:
            raise ConfigError("omega", str(exc)) from None
        need("lambdas", all(math.isfinite(x) and x > 0 for x in self.lambdas), "cutoffs must be positive")
        need("spec_modes", 1 <= self.spec_modes <= self.m, f"must lie in [1, m = {self.m}], got {self.spec_modes}")
        need("lambda_max", math.isfinite(self.lambda_max) and self.lambda_max > 0, "must be positive")
        need("T_grid", all(math.isfinite(x) and x > 0 for x in self.T_grid), "horizons must be positive")
        if self.T_grid:
            d = [b - a for a, b in zip(self.T_grid, self.T_grid[1:])]
            need("T_grid", all(x > 0 for x in d) or all(x < 0 for x in d), "horizons must be strictly monotone")
        need("T_count", self.T_count >= 2, f"must be at least 2, got {self.T_count}")
        need("T_span", self.T_span > 1, f"must exceed 1, got {self.T_span}")
        need("T_list", len(self.T_list) > 0 and all(math.isfinite(x) and x > 0 for x in self.T_list),
             "needs at least one positive horizon")
        need("eps", 0 < self.eps < 1, f"must lie in (0, 1), got {self.eps}")
        need("ratio", 0 < self.ratio < 1, f"must lie in (0, 1), got {self.ratio}")
        need("tol_target", 0 < self.tol_target < 1, f"must lie in (0, 1), got {self.tol_target}")
        need("eps_pen", self.eps_pen > 0, f"must be positive, got {self.eps_pen}")
        need("kappa", self.kappa > 0, f"must be positive, got {self.kappa}")
        need("draws", self.draws >= 1, f"must be at least 1, got {self.draws}")
        need("seed", 0 <= self.seed < 2**64, f"must be an unsigned 64-bit integer, got {self.seed}")
        need("out", bool(self.out), "must be a directory path")
        return self

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def dump(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return _floats(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown or repeated keys and invalid values.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given more than once")
        values[key] = _convert(key, raw)
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
