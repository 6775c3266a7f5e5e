"""Flat key = value run configuration files.

Format: one `key = value` per line, `#` starts a comment, blank lines
ignored. No nesting; diff-friendly fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _to_bool(value: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


@dataclass
class RunConfig:
    """Everything a CLI run needs; validated before any grid is allocated."""

    kappa: int
    sigma: int = 0
    theta: float | None = None
    mass: float | None = None
    dim: int = 1
    p_max: float = 8.0
    torus_length: float = 2.0 * math.pi
    n_x: int = 64
    n_p: int = 128
    dt: float = 1e-3
    t_end: float = 15.0
    scheme: str = "strang"
    cfl_safety: float = 0.8
    output_stride: int = 50
    snapshot_stride: int = 0  # 0 -> one tenth of the run
    limiter: str = "llf"
    epsilon: float = 1e-2
    perturb_mode: int = 1
    perturb_hermite: int = 0
    fit_t_lo: float = 0.5
    seed: int = 1234
    with_linearized: bool = False
    with_monitor: bool = False

    _PARSERS = {
        "kappa": int, "sigma": int, "theta": float, "mass": float, "dim": int,
        "p_max": float, "torus_length": float, "n_x": int, "n_p": int,
        "dt": float, "t_end": float, "scheme": str, "cfl_safety": float,
        "output_stride": int, "snapshot_stride": int, "limiter": str,
        "epsilon": float, "perturb_mode": int, "perturb_hermite": int,
        "fit_t_lo": float, "seed": int,
        "with_linearized": _to_bool, "with_monitor": _to_bool,
    }

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            raw = parse_config_text(fh.read())
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kappa" not in raw:
            raise ConfigError("missing required key 'kappa'")
        kwargs = {}
        for key, value in raw.items():
            try:
                kwargs[key] = cls._PARSERS[key](value)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from exc
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def __post_init__(self):
        if self.kappa not in (-1, 0, 1):
            raise ConfigError(f"kappa must be -1, 0 or +1, got {self.kappa}")
        if self.sigma not in (0, 1):
            raise ConfigError(f"sigma must be 0 or 1, got {self.sigma}")
        if (self.theta is None) == (self.mass is None):
            raise ConfigError("exactly one of theta/mass must be set")
        if self.dim not in (1, 2, 3):
            raise ConfigError("dim must be 1, 2 or 3 (radial reduction plumbing)")
        for key in ("p_max", "torus_length", "dt", "t_end", "epsilon"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.n_x < 4 or self.n_p < 64:
            raise ConfigError("need n_x >= 4 and n_p >= 64")
        if self.scheme not in ("strang", "splitting_order1"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.limiter not in ("llf", "minmod"):
            raise ConfigError(f"unknown limiter {self.limiter!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must be in (0, 1]")
        if self.output_stride < 1 or self.snapshot_stride < 0:
            raise ConfigError("output_stride >= 1, snapshot_stride >= 0 required")
        if self.fit_t_lo < 0 or self.fit_t_lo >= self.t_end:
            raise ConfigError("fit_t_lo must lie in [0, t_end)")

    def model_params(self):
        from .equilibrium import ModelParams

        try:
            return ModelParams(
                kappa=self.kappa,
                sigma=self.sigma,
                theta=self.theta,
                mass=self.mass,
                dim=self.dim,
                p_max=self.p_max,
                torus_length=self.torus_length,
            ).resolved()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def solver_config(self):
        from .solver import SolverConfig

        n_steps = int(round(self.t_end / self.dt))
        stride = self.snapshot_stride or max(n_steps // 10, 1)
        try:
            return SolverConfig(
                dt=self.dt,
                t_end=self.t_end,
                scheme=self.scheme,
                cfl_safety=self.cfl_safety,
                output_stride=self.output_stride,
                snapshot_stride=stride,
                limiter=self.limiter,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
