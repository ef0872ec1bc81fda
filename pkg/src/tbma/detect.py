"""Optimal (model-based) edge and cloud detectors.

Per level ``m`` the received sample is a Poisson mixture of complex
Gaussians,

    f(y) = sum_{n1, n2} P(n1 | a) P(n2 | b) CN(y | n1 mu_H + n2 mu_G,
                                              n1 s2_H + n2 s2_G + W0 + extra)

with ``a = lambda p_own(m)`` and ``b = lambda p_other(m)`` (thinned rates).
Everything is evaluated in the log domain.  When the in-cell and cross-cell
channels share mean and variance, or one rate is zero, the double sum
collapses exactly to a single Poisson sum with rate ``a + b``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy import special, stats

from .airlink import CollectionTrace, ReceivedVector
from .config import HYPOTHESES, SystemConfig, conditional_prior, joint_prior, pmf_table
from .fronthaul import QuantizationSpec

class Detector(str, enum.Enum):
    EDGE_OPTIMAL = "EdgeOptimal"
    CLOUD_OPTIMAL = "CloudOptimal"
    EDGE_LEARNED = "EdgeLearned"
    CLOUD_LEARNED = "CloudLearned"


@dataclass(frozen=True)
class TruncationPolicy:
    """How far the infinite Poisson sums are carried.

    ``n_max=None`` is adaptive: each marginal is cut where its upper tail
    drops below ``tail_mass_tol / 2`` and extended per sample until the
    dropped mass is provably below ``tail_mass_tol`` relative to the kept
    sum.  A fixed ``n_max`` sums ``0..n_max`` per marginal, no checks.
    """

    n_max: int | None = None
    tail_mass_tol: float = 1e-12

    def __post_init__(self):
        if self.n_max is not None and self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if not (0 < self.tail_mass_tol <= 1e-6):
            raise ValueError("tail_mass_tol must lie in (0, 1e-6]")

    @classmethod
    def fixed(cls, n_max: int) -> "TruncationPolicy":
        return cls(n_max=n_max)

    @property
    def adaptive(self) -> bool:
        return self.n_max is None


ADAPTIVE = TruncationPolicy()


@dataclass(frozen=True)
class PoissonMixtureComponent:
    n1: int
    n2: int
    weight: float
    mu: float
    sigma2: float


@dataclass(frozen=True)
class DetectionOutcome:
    theta_hat1: int | None
    theta_hat2: int | None
    log_scores: np.ndarray
    detector: Detector


# ---------------------------------------------------------------------------
# per-level mixture


def poisson_tail_count(rate: float, tol: float) -> int:
    """Smallest ``N`` with Pr[Poisson(rate) > N] <= tol."""
    if rate <= 0:
        return 0
    n = int(stats.poisson.isf(tol, rate))
    while n > 0 and special.pdtrc(n - 1, rate) <= tol:
        n -= 1
    while special.pdtrc(n, rate) > tol:
        n += 1
    return n


def _log_poisson(n: np.ndarray, rate: float) -> np.ndarray:
    return special.xlogy(n, rate) - rate - special.gammaln(n + 1)


@dataclass(frozen=True)
class LevelMixture:
    """Poisson-weighted Gaussian components for one level of one hypothesis."""

    rate_a: float
    rate_b: float
    mu_a: float
    var_a: float
    mu_b: float
    var_b: float
    floor_var: float

    @property
    def single(self) -> bool:
        return (self.rate_b == 0 or self.rate_a == 0
                or (self.mu_a == self.mu_b and self.var_a == self.var_b))

    def components(self, n_a: int, n_b: int):
        """(log weight, mean, variance) arrays over the truncated grid.

        In the single-sum case only ``n_a`` is used.
        """
        if self.single:
            if self.rate_a == 0 and self.rate_b > 0:
                rate, mu, var = self.rate_b, self.mu_b, self.var_b
            else:
                rate, mu, var = self.rate_a + self.rate_b, self.mu_a, self.var_a
            n = np.arange(n_a + 1, dtype=float)
            return _log_poisson(n, rate), n * mu, n * var + self.floor_var
        n1 = np.arange(n_a + 1, dtype=float)[:, None]
        n2 = np.arange(n_b + 1, dtype=float)[None, :]
        logw = _log_poisson(n1, self.rate_a) + _log_poisson(n2, self.rate_b)
        mean = n1 * self.mu_a + n2 * self.mu_b
        var = n1 * self.var_a + n2 * self.var_b + self.floor_var
        return logw.ravel(), mean.ravel(), var.ravel()

    def tail_counts(self, tol: float) -> tuple[int, int]:
        if self.single:
            rate = self.rate_b if self.rate_a == 0 else self.rate_a + self.rate_b
            return poisson_tail_count(rate, tol), 0
        return poisson_tail_count(self.rate_a, tol / 2), poisson_tail_count(self.rate_b, tol / 2)

    def tail_mass(self, n_a: int, n_b: int) -> float:
        if self.single:
            rate = self.rate_b if self.rate_a == 0 else self.rate_a + self.rate_b
            return float(special.pdtrc(n_a, rate)) if rate > 0 else 0.0
        return float(special.pdtrc(n_a, self.rate_a) + special.pdtrc(n_b, self.rate_b))

    def dropped_var_floor(self, n_a: int, n_b: int) -> float:
        """Smallest variance among components outside the truncated grid."""
        if self.single:
            var = self.var_b if self.rate_a == 0 else self.var_a
            return self.floor_var + (n_a + 1) * var
        return self.floor_var + min((n_a + 1) * self.var_a, (n_b + 1) * self.var_b)

    def list_components(self, n_a: int, n_b: int) -> list[PoissonMixtureComponent]:
        logw, mean, var = self.components(n_a, n_b)
        if self.single:
            return [PoissonMixtureComponent(i, 0, float(w), float(m), float(v))
                    for i, (w, m, v) in enumerate(zip(logw, mean, var))]
        grid = [(i, j) for i in range(n_a + 1) for j in range(n_b + 1)]
        return [PoissonMixtureComponent(i, j, float(w), float(m), float(v))
                for (i, j), w, m, v in zip(grid, logw, mean, var)]


@numba.njit(cache=True)
def _mixture_kernel(yr, yi, base, mean, inv, out):
    n_comp = base.size
    terms = np.empty(n_comp)
    for r in range(yr.size):
        yi2 = yi[r] * yi[r]
        top = -np.inf
        for i in range(n_comp):
            d = yr[r] - mean[i]
            t = base[i] - (d * d + yi2) * inv[i]
            terms[i] = t
            if t > top:
                top = t
        acc = 0.0
        for i in range(n_comp):
            acc += math.exp(terms[i] - top)
        out[r] = top + math.log(acc)


def _mixture_logpdf(y: np.ndarray, logw, mean, var) -> np.ndarray:
    """log sum_i w_i CN(y | mean_i, var_i) for 1-D complex ``y``."""
    out = np.empty(y.shape, dtype=float)
    base = np.ascontiguousarray(logw - np.log(np.pi * var), dtype=float)
    _mixture_kernel(np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag), base,
                    np.ascontiguousarray(mean, dtype=float),
                    np.ascontiguousarray(1.0 / var, dtype=float), out)
    return out


def level_logpdf(y: np.ndarray, mix: LevelMixture, policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """Log mixture density of every entry of complex array ``y``."""
    y = np.asarray(y, dtype=complex)
    flat = y.ravel()
    if policy.n_max is not None:
        n_a = n_b = policy.n_max
        return _mixture_logpdf(flat, *mix.components(n_a, n_b)).reshape(y.shape)
    tol = policy.tail_mass_tol
    n_a, n_b = mix.tail_counts(tol)
    out = _mixture_logpdf(flat, *mix.components(n_a, n_b))
    pending = np.arange(flat.size)
    for _ in range(64):
        tail = mix.tail_mass(n_a, n_b)
        if tail == 0.0:
            break
        # every dropped term has density <= 1/(pi * dropped_var_floor); their
        # total must stay below tol relative to the kept sum
        log_bound = math.log(tail) - math.log(math.pi * mix.dropped_var_floor(n_a, n_b))
        bad = pending[log_bound - math.log(tol) > out[pending]]
        if bad.size == 0:
            break
        n_a, n_b = 2 * n_a + 8, (2 * n_b + 8 if not mix.single else 0)
        out[bad] = _mixture_logpdf(flat[bad], *mix.components(n_a, n_b))
        pending = bad
    return out.reshape(y.shape)


def level_mixtures(cfg: SystemConfig, cell: int, own: int, other: int,
                   extra_var: float = 0.0) -> list[LevelMixture]:
    table = pmf_table(cfg)
    c, cp = cell - 1, 2 - cell
    floor = cfg.noise_var + extra_var
    return [
        LevelMixture(cfg.lam * table[c, own, m],
                     0.0 if cfg.orthogonal else cfg.lam * table[cp, other, m],
                     cfg.mu_h, cfg.sigma2_h, cfg.interference_mean, cfg.interference_var,
                     floor)
        for m in range(cfg.dims)
    ]


def _check_input(y: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    y = np.asarray(y.samples if isinstance(y, ReceivedVector) else y, dtype=complex)
    if y.shape[-1] != cfg.dims:
        raise ValueError(f"received vector length {y.shape[-1]} != {cfg.dims} for {cfg.reuse_mode.value}")
    if not np.all(np.isfinite(y)):
        raise ValueError("received vector has non-finite entries")
    return y


def loglik_interval(y, own: int, other: int, extra_var: float, cfg: SystemConfig,
                    policy: TruncationPolicy = ADAPTIVE, cell: int = 1) -> np.ndarray | float:
    """log f(y | theta^cell = own, theta^other_cell = other) for one interval.

    ``y`` may carry leading batch axes; the last axis is the level index.
    ``extra_var`` is 0 at the edge and the fronthaul noise variance at the cloud.
    """
    y = _check_input(y, cfg)
    total = np.zeros(y.shape[:-1])
    for m, mix in enumerate(level_mixtures(cfg, cell, own, other, extra_var)):
        total = total + level_logpdf(y[..., m], mix, policy)
    return float(total) if total.ndim == 0 else total


def interval_logliks(y: np.ndarray, cfg: SystemConfig, cell: int, extra_var: float = 0.0,
                     policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """Per-interval log-likelihoods for all four (own, other) pairs.

    Returns an array of shape ``y.shape[:-1] + (2, 2)``.  Hypothesis pairs
    whose level mixtures coincide are evaluated once.
    """
    y = _check_input(y, cfg)
    out = np.empty(y.shape[:-1] + (2, 2))
    cache: dict = {}
    for own in (0, 1):
        for other in (0, 1):
            total = np.zeros(y.shape[:-1])
            for m, mix in enumerate(level_mixtures(cfg, cell, own, other, extra_var)):
                key = (m, mix.rate_a + mix.rate_b) if mix.single and mix.rate_a > 0 else (m, mix)
                if key not in cache:
                    cache[key] = level_logpdf(y[..., m], mix, policy)
                total = total + cache[key]
            out[..., own, other] = total
    return out


def brute_force_loglik_oracle(y, own: int, other: int, extra_var: float, cfg: SystemConfig,
                              n_max: int | None = None, cell: int = 1) -> float:
    """Reference double sum in extended precision, no log-domain tricks.

    Sums ``n1, n2 = 0..n_max`` directly with
    ``n_max = ceil(lambda + 12 sqrt(lambda) + 20)`` by default.
    """
    y = np.asarray(y.samples if isinstance(y, ReceivedVector) else y, dtype=complex)
    if n_max is None:
        n_max = math.ceil(cfg.lam + 12 * math.sqrt(cfg.lam) + 20)
    ld = np.longdouble
    n = np.arange(n_max + 1).astype(ld)
    log_fact = np.concatenate([[ld(0)], np.cumsum(np.log(n[1:]))])
    table = pmf_table(cfg)
    c, cp = cell - 1, 2 - cell
    w0 = ld(cfg.noise_var) + ld(extra_var)

    def pmf(rate):
        if rate == 0:
            p = np.zeros(n_max + 1, dtype=ld)
            p[0] = 1
            return p
        rate = ld(rate)
        return np.exp(n * np.log(rate) - rate - log_fact)

    total = ld(0)
    for m in range(y.shape[-1]):
        p1 = pmf(cfg.lam * table[c, own, m])
        p2 = pmf(0.0 if cfg.orthogonal else cfg.lam * table[cp, other, m])
        mean = n[:, None] * ld(cfg.mu_h) + n[None, :] * ld(cfg.interference_mean)
        var = n[:, None] * ld(cfg.sigma2_h) + n[None, :] * ld(cfg.interference_var) + w0
        yr, yi = ld(y[m].real), ld(y[m].imag)
        dens = np.exp(-((yr - mean) ** 2 + yi ** 2) / var) / (ld(np.pi) * var)
        total += np.log(np.sum(p1[:, None] * p2[None, :] * dens))
    return float(total)


# ---------------------------------------------------------------------------
# detectors


def _as_samples(received) -> np.ndarray:
    if isinstance(received, np.ndarray):
        return received
    return np.stack([r.samples if isinstance(r, ReceivedVector) else np.asarray(r) for r in received])


def edge_log_scores(y: np.ndarray, cell: int, cfg: SystemConfig,
                    policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """log f(Y^c | theta^c = theta_j), j = 0, 1, for ``y`` of shape (..., L, D)."""
    ll = interval_logliks(y, cfg, cell, 0.0, policy).sum(axis=-3)
    with np.errstate(divide="ignore"):
        log_cond = np.log([[conditional_prior(cfg, j, k) for k in (0, 1)] for j in (0, 1)])
    return special.logsumexp(ll + log_cond, axis=-1)


def edge_decide(y: np.ndarray, cell: int, cfg: SystemConfig,
                policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """Batched LLR test: theta_0 iff log f(Y|theta_0) >= log f(Y|theta_1)."""
    s = edge_log_scores(y, cell, cfg, policy)
    return (s[..., 1] > s[..., 0]).astype(np.int64)


def edge_detect(received, cell: int, cfg: SystemConfig,
                policy: TruncationPolicy = ADAPTIVE) -> DetectionOutcome:
    y = _check_input(_as_samples(received), cfg)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("edge_detect expects L >= 1 vectors of one cell")
    scores = edge_log_scores(y, cell, cfg, policy)
    theta = int(scores[1] > scores[0])
    return DetectionOutcome(theta if cell == 1 else None, theta if cell == 2 else None,
                            scores, Detector.EDGE_OPTIMAL)


def edge_detect_trace(trace: CollectionTrace, cfg: SystemConfig,
                      policy: TruncationPolicy = ADAPTIVE) -> DetectionOutcome:
    s1 = edge_log_scores(trace.y1, 1, cfg, policy)
    s2 = edge_log_scores(trace.y2, 2, cfg, policy)
    return DetectionOutcome(int(s1[1] > s1[0]), int(s2[1] > s2[0]),
                            np.stack([s1, s2]), Detector.EDGE_OPTIMAL)


def cloud_log_scores(y1: np.ndarray, y2: np.ndarray, cfg: SystemConfig, spec: QuantizationSpec,
                     policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """MAP scores for H_00, H_01, H_10, H_11 (last axis), inputs (..., L, D)."""
    ll1 = interval_logliks(y1, cfg, 1, spec.sigma2_q1, policy).sum(axis=-3)
    ll2 = interval_logliks(y2, cfg, 2, spec.sigma2_q2, policy).sum(axis=-3)
    with np.errstate(divide="ignore"):
        log_prior = np.log([joint_prior(cfg, h) for h in HYPOTHESES])
    # cell 2's own hypothesis is k and its interferer's is j
    scores = [ll1[..., h.j, h.k] + ll2[..., h.k, h.j] for h in HYPOTHESES]
    return np.stack(scores, axis=-1) + log_prior


def cloud_decide(y1, y2, cfg: SystemConfig, spec: QuantizationSpec,
                 policy: TruncationPolicy = ADAPTIVE) -> np.ndarray:
    """Batched MAP labels 2j + k; ties go to the lexicographically smallest."""
    return np.argmax(cloud_log_scores(y1, y2, cfg, spec, policy), axis=-1)


def cloud_detect(received1: Sequence, received2: Sequence, cfg: SystemConfig,
                 spec: QuantizationSpec, policy: TruncationPolicy = ADAPTIVE) -> DetectionOutcome:
    y1 = _check_input(_as_samples(received1), cfg)
    y2 = _check_input(_as_samples(received2), cfg)
    scores = cloud_log_scores(y1, y2, cfg, spec, policy)
    h = HYPOTHESES[int(np.argmax(scores))]
    return DetectionOutcome(h.j, h.k, scores, Detector.CLOUD_OPTIMAL)
