"""System parameters, QoI prior and observation distributions.

A :class:`SystemConfig` is built once, validated, and then treated as
immutable. Everything downstream (simulation, detection, exponents) takes
the validated config and never mutates it.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

PMF_TOL = 1e-12

DEFAULT_PMF0 = (0.4, 0.3, 0.2, 0.1)
DEFAULT_PMF1 = (0.1, 0.2, 0.3, 0.4)


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class ReuseMode(str, enum.Enum):
    NON_ORTHOGONAL = "NonOrthogonal"
    ORTHOGONAL = "Orthogonal"


class QoiPair(NamedTuple):
    theta1: int
    theta2: int


class Hypothesis(NamedTuple):
    """Joint hypothesis H_jk: cell 1 holds theta_j, cell 2 holds theta_k."""

    j: int
    k: int

    @property
    def label(self) -> int:
        return 2 * self.j + self.k


HYPOTHESES = (Hypothesis(0, 0), Hypothesis(0, 1), Hypothesis(1, 0), Hypothesis(1, 1))


@dataclass(frozen=True)
class SystemConfig:
    """All scalar model parameters of the two-cell TBMA uplink.

    ``snr_db`` is converted once to ``snr`` (linear); the symbol energy is
    normalised to one so the matched-filter noise variance is ``1 / snr``.
    """

    lam: float = 4.0
    snr_db: float = 3.0
    m_levels: int = 4
    l_intervals: int = 5
    rho: float = 0.85
    fronthaul_capacity: float = 5.0
    mu_h: float = 1.0
    sigma2_h: float = 1.0
    mu_g: float = 1.0
    sigma2_g: float = 1.0
    reuse_mode: ReuseMode = ReuseMode.NON_ORTHOGONAL
    pmf_cell1_h0: tuple[float, ...] = DEFAULT_PMF0
    pmf_cell1_h1: tuple[float, ...] = DEFAULT_PMF1
    pmf_cell2_h0: tuple[float, ...] = DEFAULT_PMF0
    pmf_cell2_h1: tuple[float, ...] = DEFAULT_PMF1
    # rate-distortion form of the fronthaul constraint; False selects the
    # literal per-level (sigma_q^2)^M denominator
    per_dim_form: bool = True
    _validated: bool = field(default=False, repr=False, compare=False)

    @property
    def snr(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def noise_var(self) -> float:
        return 1.0 / self.snr

    @property
    def orthogonal(self) -> bool:
        return self.reuse_mode is ReuseMode.ORTHOGONAL

    @property
    def dims(self) -> int:
        """Length of one received vector (M, or M/2 under orthogonal reuse)."""
        return self.m_levels // 2 if self.orthogonal else self.m_levels

    @property
    def interference_mean(self) -> float:
        return 0.0 if self.orthogonal else self.mu_g

    @property
    def interference_var(self) -> float:
        return 0.0 if self.orthogonal else self.sigma2_g

    def replace(self, **changes) -> "SystemConfig":
        """Copy with ``changes`` applied, re-validated."""
        changes.setdefault("_validated", False)
        return validate_config(dataclasses.replace(self, **changes))


def default_config(**overrides) -> SystemConfig:
    """Numerical-results defaults: lambda=4, SNR=3 dB, M=4, rho=0.85, unit channels."""
    return validate_config(SystemConfig(**overrides))


def _check_pmf(name: str, pmf, m_levels: int) -> tuple[float, ...]:
    arr = np.asarray(pmf, dtype=float)
    if arr.ndim != 1 or arr.size != m_levels:
        raise ConfigError(f"{name} has length {arr.size}, expected M={m_levels}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(f"{name} has negative or non-finite entries")
    total = float(arr.sum())
    if abs(total - 1.0) > PMF_TOL:
        raise ConfigError(f"{name} sums to {total:.12g}")
    return tuple(float(x) for x in arr)


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` if every invariant holds, else raise :class:`ConfigError`.

    The first violated invariant is reported by name.
    """
    if cfg._validated:
        return cfg
    if not (isinstance(cfg.m_levels, int) and cfg.m_levels >= 2):
        raise ConfigError(f"m_levels must be an integer >= 2, got {cfg.m_levels!r}")
    reuse = ReuseMode(cfg.reuse_mode)
    if reuse is ReuseMode.ORTHOGONAL and cfg.m_levels % 2:
        raise ConfigError(f"M must be even for Orthogonal reuse, got M={cfg.m_levels}")
    if not (isinstance(cfg.l_intervals, int) and cfg.l_intervals >= 1):
        raise ConfigError(f"l_intervals must be a positive integer, got {cfg.l_intervals!r}")
    if not (math.isfinite(cfg.lam) and cfg.lam > 0):
        raise ConfigError(f"lambda must be > 0, got {cfg.lam}")
    if not (0.0 <= cfg.rho <= 1.0):
        raise ConfigError(f"rho must lie in [0, 1], got {cfg.rho}")
    if not math.isfinite(cfg.snr_db):
        raise ConfigError(f"snr_db must be finite, got {cfg.snr_db}")
    if not (cfg.snr > 0 and math.isfinite(cfg.snr)):
        raise ConfigError(f"linear SNR must be positive and finite, got {cfg.snr}")
    if not (cfg.fronthaul_capacity >= 0 and not math.isnan(cfg.fronthaul_capacity)):
        raise ConfigError(f"fronthaul_capacity must be >= 0, got {cfg.fronthaul_capacity}")
    for name in ("mu_h", "mu_g"):
        if not math.isfinite(getattr(cfg, name)):
            raise ConfigError(f"{name} must be finite")
    for name in ("sigma2_h", "sigma2_g"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError(f"{name} must be a finite nonnegative variance, got {v}")
    pmfs = {
        name: _check_pmf(name, getattr(cfg, name), cfg.m_levels)
        for name in ("pmf_cell1_h0", "pmf_cell1_h1", "pmf_cell2_h0", "pmf_cell2_h1")
    }
    return dataclasses.replace(
        cfg,
        reuse_mode=reuse,
        lam=float(cfg.lam),
        rho=float(cfg.rho),
        per_dim_form=bool(cfg.per_dim_form),
        _validated=True,
        **pmfs,
    )


def joint_prior(cfg: SystemConfig, h: Hypothesis | tuple[int, int]) -> float:
    j, k = h
    return cfg.rho / 2 if j == k else (1.0 - cfg.rho) / 2


def conditional_prior(cfg: SystemConfig, own: int, other: int) -> float:
    """Pr(theta^{c'} = other | theta^c = own) = 2 p(own, other)."""
    return 2.0 * joint_prior(cfg, (own, other))


def sample_qoi_pairs(cfg: SystemConfig, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised draw of ``size`` QoI pairs; returns (theta1, theta2) int arrays."""
    theta1 = (rng.random(size) < 0.5).astype(np.int64)
    agree = rng.random(size) < cfg.rho
    theta2 = np.where(agree, theta1, 1 - theta1)
    return theta1, theta2


def sample_qoi_pair(cfg: SystemConfig, rng: np.random.Generator) -> QoiPair:
    t1, t2 = sample_qoi_pairs(cfg, rng, 1)
    return QoiPair(int(t1[0]), int(t2[0]))


def coarsen_pmf(pmf) -> np.ndarray:
    """Merge levels {2m-1, 2m} into one (orthogonal reuse)."""
    arr = np.asarray(pmf, dtype=float)
    return arr[0::2] + arr[1::2]


def observation_pmf(cfg: SystemConfig, cell: int, hyp: int) -> np.ndarray:
    """Per-level observation pmf of ``cell`` (1 or 2) under QoI value ``hyp``."""
    if cell not in (1, 2) or hyp not in (0, 1):
        raise ValueError(f"cell must be 1/2 and hyp 0/1, got cell={cell}, hyp={hyp}")
    pmf = np.asarray(getattr(cfg, f"pmf_cell{cell}_h{hyp}"), dtype=float)
    return coarsen_pmf(pmf) if cfg.orthogonal else pmf


def pmf_table(cfg: SystemConfig) -> np.ndarray:
    """Array ``[cell-1, hyp, m]`` of observation pmfs in the active reuse mode."""
    return np.array([[observation_pmf(cfg, c, h) for h in (0, 1)] for c in (1, 2)])


# ---------------------------------------------------------------------------
# key = value config files

_FLOAT_KEYS = {
    "lambda": "lam",
    "snr_db": "snr_db",
    "rho": "rho",
    "fronthaul_capacity": "fronthaul_capacity",
    "mu_h": "mu_h",
    "sigma2_h": "sigma2_h",
    "mu_g": "mu_g",
    "sigma2_g": "sigma2_g",
}
_INT_KEYS = {"m_levels": "m_levels", "l_intervals": "l_intervals"}
_PMF_KEYS = ("pmf_cell1_h0", "pmf_cell1_h1", "pmf_cell2_h0", "pmf_cell2_h1")
_BOOL_KEYS = {"fronthaul.per_dim_form": "per_dim_form"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse ``key = value`` lines into a validated config.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    Keys absent from the file keep the values of ``base`` (defaults).
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _FLOAT_KEYS:
                values[_FLOAT_KEYS[key]] = float(value)
            elif key in _INT_KEYS:
                values[_INT_KEYS[key]] = int(value)
            elif key in _PMF_KEYS:
                values[key] = tuple(float(x) for x in value.split(","))
            elif key in _BOOL_KEYS:
                values[_BOOL_KEYS[key]] = _parse_bool(value)
            elif key == "reuse_mode":
                values["reuse_mode"] = ReuseMode(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    base = base or SystemConfig()
    return validate_config(dataclasses.replace(base, _validated=False, **values))


def load_config(path: str | Path) -> SystemConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SystemConfig) -> str:
    """Inverse of :func:`parse_config`."""
    inv_float = {v: k for k, v in _FLOAT_KEYS.items()}
    lines = [f"{inv_float[a]} = {getattr(cfg, a)!r}" for a in _FLOAT_KEYS.values()]
    lines += [f"{k} = {getattr(cfg, a)}" for k, a in _INT_KEYS.items()]
    lines.append(f"reuse_mode = {ReuseMode(cfg.reuse_mode).value}")
    lines += [f"{k} = " + ", ".join(repr(x) for x in getattr(cfg, k)) for k in _PMF_KEYS]
    lines += [f"{k} = {str(getattr(cfg, a)).lower()}" for k, a in _BOOL_KEYS.items()]
    return "\n".join(lines) + "\n"
