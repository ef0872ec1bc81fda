"""Fronthaul quantization-noise variance from the capacity constraint.

The Gaussian upper bound on the mutual information between the edge signal
and its quantized version gives, per cell and per collection,

    D * C = 1/2 * sum_m log2(1 + S_m / s)              (per-dimension form)
    D * C = 1/2 * sum_m log2((S_m + s) / s**D)         (literal form)

where ``S_m`` is the prior-averaged variance of level ``m`` and ``D`` the
number of levels.  Both right-hand sides are strictly decreasing in ``s``,
so the root is unique and bisection is enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .airlink import ReceivedVector, complex_normal
from .config import HYPOTHESES, SystemConfig, joint_prior, observation_pmf

REL_TOL = 1e-12


class QuantizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuantizationSpec:
    sigma2_q1: float
    sigma2_q2: float
    capacity: float
    residual: float
    per_dim_form: bool = True

    def variance(self, cell: int) -> float:
        return self.sigma2_q1 if cell == 1 else self.sigma2_q2


def level_variances(cfg: SystemConfig, cell: int, own: int, other: int) -> np.ndarray:
    """Diagonal of the per-interval covariance at ``cell``: sigma_H^2 lambda p_own
    + sigma_G^2 lambda p_other (other cell's pmf) + 1/SNR."""
    other_cell = 2 if cell == 1 else 1
    return (cfg.sigma2_h * cfg.lam * observation_pmf(cfg, cell, own)
            + cfg.interference_var * cfg.lam * observation_pmf(cfg, other_cell, other)
            + cfg.noise_var)


def averaged_variances(cfg: SystemConfig, cell: int) -> np.ndarray:
    """Prior-weighted level variances S_m (law of iterated expectations)."""
    total = np.zeros(cfg.dims)
    for h in HYPOTHESES:
        own, other = (h.j, h.k) if cell == 1 else (h.k, h.j)
        total += joint_prior(cfg, h) * level_variances(cfg, cell, own, other)
    return total


def capacity_rhs(s: float, level_var: np.ndarray, per_dim_form: bool) -> float:
    """Right-hand side of the capacity equation in bits, at noise variance ``s``."""
    d = level_var.size
    if per_dim_form:
        return 0.5 * float(np.sum(np.log2(1.0 + level_var / s)))
    return 0.5 * float(np.sum(np.log2(level_var + s) - d * math.log2(s)))


def _bisect_log(f, lo: float = 1e-12, hi: float = 1.0) -> float:
    """Root of decreasing ``f`` over s > 0, bisecting in log(s)."""
    for _ in range(48):
        if f(lo) > 0:
            break
        lo *= 1e-6
    else:
        raise QuantizationError(f"no lower bracket found (f({lo:.3g}) = {f(lo):.3g})")
    for _ in range(1000):
        if f(hi) < 0:
            break
        hi *= 2.0
    else:
        raise QuantizationError(f"no upper bracket found (f({hi:.3g}) = {f(hi):.3g})")
    a, b = math.log(lo), math.log(hi)
    while b - a > REL_TOL:
        mid = 0.5 * (a + b)
        if f(math.exp(mid)) > 0:
            a = mid
        else:
            b = mid
    return math.exp(0.5 * (a + b))


def solve_cell_variance(cfg: SystemConfig, cell: int, capacity: float | None = None) -> tuple[float, float]:
    """Return (sigma_q^2, residual in bits) for one cell."""
    c = cfg.fronthaul_capacity if capacity is None else capacity
    if not c > 0:
        raise QuantizationError("fronthaul capacity C=0 gives infinite quantization noise")
    if not math.isfinite(c):
        raise QuantizationError(f"fronthaul capacity must be finite, got {c}")
    s_m = averaged_variances(cfg, cell)
    target = cfg.dims * c

    def f(s):
        return capacity_rhs(s, s_m, cfg.per_dim_form) - target

    root = _bisect_log(f)
    return root, abs(f(root))


def solve_quantization_variance(cfg: SystemConfig) -> QuantizationSpec:
    s1, r1 = solve_cell_variance(cfg, 1)
    s2, r2 = solve_cell_variance(cfg, 2)
    return QuantizationSpec(s1, s2, cfg.fronthaul_capacity, max(r1, r2), cfg.per_dim_form)


def quantize_samples(y: np.ndarray, sigma2_q: float, rng: np.random.Generator) -> np.ndarray:
    return y + complex_normal(rng, sigma2_q, size=np.shape(y))


def quantize_signal(y: ReceivedVector, spec: QuantizationSpec, rng: np.random.Generator) -> ReceivedVector:
    """Add i.i.d. CN(0, sigma_q^2) fronthaul noise for ``y.cell``."""
    return ReceivedVector(y.cell, y.interval, quantize_samples(y.samples, spec.variance(y.cell), rng))


@dataclass(frozen=True)
class RatioLimit:
    limit: float
    sigma2_g: float
    ratio: float

    @property
    def rel_error(self) -> float:
        return abs(self.ratio - self.limit) / self.limit


def quantization_ratio_limit(cfg: SystemConfig, sigma2_g: float = 1e6, cell: int = 1) -> RatioLimit:
    """Closed-form large-interference limit lambda**(1/(2 M^2)) of sigma_q^2 / sigma_G^2,
    next to the solver's ratio at a large ``sigma2_g``."""
    limit = cfg.lam ** (1.0 / (2 * cfg.m_levels ** 2))
    s, _ = solve_cell_variance(cfg.replace(sigma2_g=sigma2_g), cell)
    return RatioLimit(limit, sigma2_g, s / sigma2_g)
