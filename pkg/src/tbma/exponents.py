"""Error exponents of the optimal edge and cloud detectors.

Received vectors are replaced by Gaussian surrogates (large-lambda CLT) and
the exponent of each binary test is the Chernoff information between two
Gaussians, i.e. the maximum over alpha in [0, 1] of

    1/2 log |S_a| / (|S0|^a |S1|^(1-a)) + a (1-a)/2 dmu' S_a^{-1} dmu,
    S_a = a S0 + (1-a) S1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .config import HYPOTHESES, Hypothesis, SystemConfig, observation_pmf
from .fronthaul import QuantizationSpec, level_variances, solve_quantization_variance

ALPHA_GRID = np.linspace(0.0, 1.0, 101)
ALPHA_TOL = 1e-6
JITTERS = (1e-12, 1e-10, 1e-8)
INV_PHI = (math.sqrt(5) - 1) / 2


class Scope(str, enum.Enum):
    EDGE_CELL1 = "EdgeCell1"
    EDGE_CELL2 = "EdgeCell2"
    CLOUD = "Cloud"


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class HypothesisMoments:
    mean: np.ndarray
    cov: np.ndarray
    label: Hypothesis
    scope: Scope
    jitter: float = 0.0


def edge_moments(cfg: SystemConfig, cell: int, j: int, k: int) -> HypothesisMoments:
    """Surrogate moments at edge ``cell`` when it holds theta_j and the other cell theta_k."""
    other = 2 if cell == 1 else 1
    mean = (cfg.mu_h * cfg.lam * observation_pmf(cfg, cell, j)
            + cfg.interference_mean * cfg.lam * observation_pmf(cfg, other, k))
    cov = np.diag(level_variances(cfg, cell, j, k))
    scope = Scope.EDGE_CELL1 if cell == 1 else Scope.EDGE_CELL2
    return HypothesisMoments(mean, cov, Hypothesis(j, k), scope)


def is_pd(a: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def cloud_moments(cfg: SystemConfig, spec: QuantizationSpec, j: int, k: int) -> HypothesisMoments:
    """Stacked 2D-dimensional surrogate of both quantized cells under H_jk.

    Cell 2's block is index-swapped (it holds theta_k and sees theta_j).  The
    only off-diagonal entries couple level m of both cells through the
    channel means.
    """
    d = cfg.dims
    m1, m2 = edge_moments(cfg, 1, j, k), edge_moments(cfg, 2, k, j)
    mean = np.concatenate([m1.mean, m2.mean])
    cov = np.zeros((2 * d, 2 * d))
    cov[:d, :d] = m1.cov + spec.sigma2_q1 * np.eye(d)
    cov[d:, d:] = m2.cov + spec.sigma2_q2 * np.eye(d)
    p1, p2 = observation_pmf(cfg, 1, j), observation_pmf(cfg, 2, k)
    cross = (p1 * (1 - p1) + p2 * (1 - p2)) * cfg.lam * cfg.mu_h * cfg.interference_mean
    idx = np.arange(d)
    cov[idx, d + idx] = cross
    cov[d + idx, idx] = cross
    jitter = 0.0
    if not is_pd(cov):
        for eps in JITTERS:
            if is_pd(cov + eps * np.eye(2 * d)):
                jitter = eps
                cov = cov + eps * np.eye(2 * d)
                break
        else:
            raise NotPositiveDefinite(
                f"cloud covariance for H_{j}{k} is not positive definite at these parameters")
    return HypothesisMoments(mean, cov, Hypothesis(j, k), Scope.CLOUD, jitter)


def _logdet(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _cholesky(a: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(a, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def alpha_chernoff_gaussian(m0: HypothesisMoments, m1: HypothesisMoments, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if m0.mean.shape != m1.mean.shape:
        raise ValueError("moment dimensions differ")
    if alpha in (0.0, 1.0) or (np.array_equal(m0.mean, m1.mean) and np.array_equal(m0.cov, m1.cov)):
        return 0.0
    c0, c1 = _cholesky(m0.cov), _cholesky(m1.cov)
    ca = _cholesky(alpha * m0.cov + (1 - alpha) * m1.cov)
    log_term = 0.5 * (_logdet(ca) - alpha * _logdet(c0) - (1 - alpha) * _logdet(c1))
    z = linalg.solve_triangular(ca, m0.mean - m1.mean, lower=True)
    value = log_term + 0.5 * alpha * (1 - alpha) * float(z @ z)
    return max(value, 0.0)


def golden_max(f, a: float, b: float, tol: float = ALPHA_TOL) -> tuple[float, float]:
    """Maximise unimodal ``f`` on [a, b]; returns (argmax, max)."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def chernoff_grid(m0: HypothesisMoments, m1: HypothesisMoments) -> tuple[float, float]:
    values = [alpha_chernoff_gaussian(m0, m1, a) for a in ALPHA_GRID]
    i = int(np.argmax(values))
    return values[i], float(ALPHA_GRID[i])


def chernoff_info(m0: HypothesisMoments, m1: HypothesisMoments) -> tuple[float, float]:
    """Chernoff information and its optimising alpha.

    Dense grid (step 0.01) first, then golden-section search in the two
    grid cells around the best grid point.
    """
    values = [alpha_chernoff_gaussian(m0, m1, a) for a in ALPHA_GRID]
    i = int(np.argmax(values))
    lo, hi = ALPHA_GRID[max(i - 1, 0)], ALPHA_GRID[min(i + 1, ALPHA_GRID.size - 1)]
    alpha, best = golden_max(lambda a: alpha_chernoff_gaussian(m0, m1, a), lo, hi)
    if values[i] > best:
        return values[i], float(ALPHA_GRID[i])
    return best, alpha


@dataclass(frozen=True)
class PairExponent:
    scope: Scope
    hypothesis: Hypothesis
    competitor: Hypothesis
    value: float
    alpha: float
    jitter: float = 0.0


@dataclass
class ExponentReport:
    e_edge: float | None = None
    e_cloud: float | None = None
    edge_pairs: list[PairExponent] = field(default_factory=list)
    cloud_pairs: list[PairExponent] = field(default_factory=list)
    spec: QuantizationSpec | None = None

    @property
    def jittered(self) -> bool:
        return any(p.jitter > 0 for p in self.cloud_pairs)

    def cloud_by_hypothesis(self) -> dict[Hypothesis, float]:
        """E_jk: the weakest competitor of each hypothesis."""
        out: dict[Hypothesis, float] = {}
        for p in self.cloud_pairs:
            out[p.hypothesis] = min(out.get(p.hypothesis, math.inf), p.value)
        return out

    def edge_by_cell(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p in self.edge_pairs:
            cell = 1 if p.scope is Scope.EDGE_CELL1 else 2
            out[cell] = min(out.get(cell, math.inf), p.value)
        return out


def edge_exponent(cfg: SystemConfig) -> ExponentReport:
    """min over cells and interferer states k of the theta_0 vs theta_1
    Chernoff information at the edge."""
    if not 0.0 < cfg.rho < 1.0:
        raise ValueError("the edge exponent bound requires 0 < rho < 1")
    pairs = []
    for cell in (1, 2):
        for k in (0, 1):
            m0, m1 = edge_moments(cfg, cell, 0, k), edge_moments(cfg, cell, 1, k)
            value, alpha = chernoff_info(m0, m1)
            pairs.append(PairExponent(m0.scope, Hypothesis(0, k), Hypothesis(1, k), value, alpha))
    return ExponentReport(e_edge=min(p.value for p in pairs), edge_pairs=pairs)


def cloud_exponent(cfg: SystemConfig, spec: QuantizationSpec | None = None) -> ExponentReport:
    """min over hypotheses H_jk and competitors of the pairwise Chernoff
    information of the stacked cloud surrogates."""
    if spec is None:
        spec = solve_quantization_variance(cfg)
    moments = {h: cloud_moments(cfg, spec, *h) for h in HYPOTHESES}
    pairs = []
    for a_idx, a in enumerate(HYPOTHESES):
        for b in HYPOTHESES[a_idx + 1:]:
            value, alpha = chernoff_info(moments[a], moments[b])
            jitter = max(moments[a].jitter, moments[b].jitter)
            pairs.append(PairExponent(Scope.CLOUD, a, b, value, alpha, jitter))
            # Chernoff information is symmetric; the optimiser mirrors
            pairs.append(PairExponent(Scope.CLOUD, b, a, value, 1.0 - alpha, jitter))
    return ExponentReport(e_cloud=min(p.value for p in pairs), cloud_pairs=pairs, spec=spec)


def exponent_report(cfg: SystemConfig, spec: QuantizationSpec | None = None) -> ExponentReport:
    edge = edge_exponent(cfg)
    cloud = cloud_exponent(cfg, spec)
    return ExponentReport(edge.e_edge, cloud.e_cloud, edge.edge_pairs, cloud.cloud_pairs, cloud.spec)


# ---------------------------------------------------------------------------
# large inter-cell gain limits


def scaling_law_spec(cfg: SystemConfig) -> QuantizationSpec:
    """Quantization variances from the closed-form scaling lambda**(1/(2M^2)) sigma_G^2."""
    s = cfg.lam ** (1.0 / (2 * cfg.m_levels ** 2)) * cfg.sigma2_g
    return QuantizationSpec(s, s, cfg.fronthaul_capacity, 0.0, cfg.per_dim_form)


def limiting_cloud_exponent(cfg: SystemConfig) -> float:
    """Cloud exponent evaluated directly on the sigma_G -> infinity limit of the
    normalised covariances: diagonals lambda p_interferer(m) + lambda**(1/(2M^2)),
    vanishing means and cross terms."""
    q = cfg.lam ** (1.0 / (2 * cfg.m_levels ** 2))
    d = cfg.dims
    moments = {}
    for h in HYPOTHESES:
        diag = np.concatenate([cfg.lam * observation_pmf(cfg, 2, h.k) + q,
                               cfg.lam * observation_pmf(cfg, 1, h.j) + q])
        moments[h] = HypothesisMoments(np.zeros(2 * d), np.diag(diag), h, Scope.CLOUD)
    return min(chernoff_info(moments[a], moments[b])[0]
               for i, a in enumerate(HYPOTHESES) for b in HYPOTHESES[i + 1:])


@dataclass
class InterferenceLimitReport:
    sigma2_g: list[float]
    e_edge: list[float]
    e_cloud: list[float]
    e_cloud_scaling: list[float]
    limit_scaling: float
    applicable: bool

    @property
    def edge_vanishes(self) -> bool:
        return self.applicable and self.e_edge[-1] < 1e-3

    @property
    def cloud_bounded(self) -> bool:
        if not self.applicable or len(self.e_cloud) < 2:
            return False
        a, b = self.e_cloud[-2], self.e_cloud[-1]
        return b > 0 and abs(b - a) <= 0.1 * a

    @property
    def passed(self) -> bool:
        return self.edge_vanishes and self.cloud_bounded

    def summary(self) -> str:
        if not self.applicable:
            return "inapplicable: the sigma_G^2 grid does not reach the large-interference regime"
        return (f"E_edge({self.sigma2_g[-1]:.0e}) = {self.e_edge[-1]:.3e}, "
                f"E_cloud plateau {self.e_cloud[-2]:.6f} -> {self.e_cloud[-1]:.6f}: "
                f"{'pass' if self.passed else 'FAIL'}")


def interference_limit_check(cfg: SystemConfig, sigma2_g_grid=None) -> InterferenceLimitReport:
    """Edge and cloud exponents along a growing inter-cell gain.

    The edge exponent must vanish while the cloud exponent settles at a
    positive value.  Cloud exponents are computed both with the capacity
    solver's quantization noise and with the closed-form large-gain scaling.
    """
    grid = [10.0 ** e for e in range(1, 7)] if sigma2_g_grid is None else list(sigma2_g_grid)
    applicable = len(grid) >= 2 and max(grid) >= 1e4
    e_edge, e_cloud, e_scaling = [], [], []
    for s2g in grid:
        c = cfg.replace(sigma2_g=s2g)
        e_edge.append(edge_exponent(c).e_edge)
        e_cloud.append(cloud_exponent(c).e_cloud)
        e_scaling.append(cloud_exponent(c, scaling_law_spec(c)).e_cloud)
    return InterferenceLimitReport(grid, e_edge, e_cloud, e_scaling, limiting_cloud_exponent(cfg), applicable)
