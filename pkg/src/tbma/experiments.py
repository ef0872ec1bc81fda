"""Monte Carlo error-probability estimates and figure-style parameter sweeps.

Trials are split into fixed-size blocks; block ``b`` of a run seeded with
``seed`` always draws from ``SeedSequence(seed, spawn_key=(b,))``.  Results
are therefore identical for any number of workers.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, TextIO

import numpy as np

from .airlink import simulate_batch
from .config import SystemConfig, sample_qoi_pairs
from .detect import ADAPTIVE, Detector, TruncationPolicy, cloud_decide, edge_decide
from .exponents import exponent_report
from .fronthaul import QuantizationSpec, quantize_samples, solve_quantization_variance

BLOCK_TRIALS = 5000
WILSON_Z = 1.959963984540054
DEFAULT_TRIALS = 100_000

CSV_COLUMNS = ("sweep", "param", "value", "detector", "pe", "ci_lo", "ci_hi", "trials",
               "e_edge", "e_cloud", "sigma2_q1", "sigma2_q2", "seed")


def wilson_interval(errors: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    p = errors / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass
class ExperimentRecord:
    sweep: str
    param: str
    value: float | str
    detector: str
    pe: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    trials: int = 0
    e_edge: float | None = None
    e_cloud: float | None = None
    sigma2_q1: float | None = None
    sigma2_q2: float | None = None
    seed: int = 0

    @property
    def errors(self) -> int:
        return round(self.pe * self.trials) if self.pe is not None else 0


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def block_sizes(n_trials: int, block: int = BLOCK_TRIALS) -> list[int]:
    full, rest = divmod(n_trials, block)
    return [block] * full + ([rest] if rest else [])


def joint_errors(theta1, theta2, hat1, hat2) -> int:
    """Count trials where at least one QoI estimate is wrong."""
    return int(np.count_nonzero((hat1 != theta1) | (hat2 != theta2)))


@dataclass
class TrialBlock:
    """One block of simulated trials; ``q1``/``q2`` are the fronthaul outputs."""

    theta1: np.ndarray
    theta2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    q1: np.ndarray | None = None
    q2: np.ndarray | None = None


def draw_block(cfg: SystemConfig, spec: QuantizationSpec | None, seed: int, block: int,
               size: int) -> TrialBlock:
    """Trials of block ``block``; the same (seed, block) gives the same draws for
    every detector, so learned and optimal detectors can share trials."""
    rng = block_rng(seed, block)
    theta1, theta2 = sample_qoi_pairs(cfg, rng, size)
    batch = simulate_batch(cfg, theta1, theta2, rng)
    tb = TrialBlock(theta1, theta2, batch.y1, batch.y2)
    if spec is not None:
        tb.q1 = quantize_samples(batch.y1, spec.sigma2_q1, rng)
        tb.q2 = quantize_samples(batch.y2, spec.sigma2_q2, rng)
    return tb


def optimal_decisions(tb: TrialBlock, cfg: SystemConfig, kind: Detector, spec: QuantizationSpec | None,
                      policy: TruncationPolicy = ADAPTIVE) -> tuple[np.ndarray, np.ndarray]:
    if kind is Detector.EDGE_OPTIMAL:
        return edge_decide(tb.y1, 1, cfg, policy), edge_decide(tb.y2, 2, cfg, policy)
    if kind is Detector.CLOUD_OPTIMAL:
        label = cloud_decide(tb.q1, tb.q2, cfg, spec, policy)
        return label // 2, label % 2
    raise ValueError(f"{kind} is not a model-based detector")


def run_optimal_block(cfg: SystemConfig, kind: Detector, spec: QuantizationSpec | None,
                      policy: TruncationPolicy, seed: int, block: int, size: int) -> int:
    tb = draw_block(cfg, spec if kind is Detector.CLOUD_OPTIMAL else None, seed, block, size)
    hat1, hat2 = optimal_decisions(tb, cfg, kind, spec, policy)
    return joint_errors(tb.theta1, tb.theta2, hat1, hat2)


def _call(args):
    fn, a = args
    return fn(*a)


def map_blocks(fn: Callable, arg_list: Sequence[tuple], workers: int = 1) -> list:
    """Ordered map, optionally across processes; order never affects results."""
    if workers <= 1 or len(arg_list) <= 1:
        return [fn(*a) for a in arg_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, a) for a in arg_list]))


def count_errors(cfg: SystemConfig, kind: Detector, n_trials: int, seed: int,
                 spec: QuantizationSpec | None = None, policy: TruncationPolicy = ADAPTIVE,
                 workers: int = 1) -> int:
    kind = Detector(kind)
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    if kind is Detector.CLOUD_OPTIMAL and spec is None:
        spec = solve_quantization_variance(cfg)
    args = [(cfg, kind, spec, policy, seed, b, size)
            for b, size in enumerate(block_sizes(n_trials))]
    # fail fast on systematic errors before fanning out
    first = run_optimal_block(*args[0])
    return first + sum(map_blocks(run_optimal_block, args[1:], workers))


def estimate_pe(cfg: SystemConfig, kind: Detector | str, n_trials: int, seed: int,
                spec: QuantizationSpec | None = None, policy: TruncationPolicy = ADAPTIVE,
                workers: int = 1, sweep: str = "pe", param: str = "", value: float | str = "") -> ExperimentRecord:
    """Monte Carlo joint error probability of an optimal detector."""
    kind = Detector(kind)
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    if kind is Detector.CLOUD_OPTIMAL and spec is None:
        spec = solve_quantization_variance(cfg)
    errors = count_errors(cfg, kind, n_trials, seed, spec, policy, workers)
    lo, hi = wilson_interval(errors, n_trials)
    return ExperimentRecord(sweep, param, value, kind.value, errors / n_trials, lo, hi, n_trials,
                            sigma2_q1=spec.sigma2_q1 if spec else None,
                            sigma2_q2=spec.sigma2_q2 if spec else None, seed=seed)


# ---------------------------------------------------------------------------
# sweeps

EXPONENTS = "Exponents"


@dataclass
class SweepPlan:
    name: str
    base: SystemConfig
    param: str
    values: Sequence
    detectors: Sequence[str]
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    training_size: int = 10_000
    epochs: int = 3000

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError(f"sweep {self.name!r} has no values")
        if self.param not in {f.name for f in fields(SystemConfig)} | {"training_size"}:
            raise ValueError(f"unknown sweep parameter {self.param!r}")

    def config_at(self, value) -> SystemConfig:
        if self.param == "training_size":
            return self.base
        return self.base.replace(**{self.param: value})


def point_seed(seed: int, index: int) -> int:
    """Independent-looking 63-bit seed for sweep point ``index``."""
    return int(np.random.SeedSequence(seed, spawn_key=(1_000_003, index)).generate_state(2, np.uint32)
               .astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64))


def _sweep_records(plan: SweepPlan, workers: int) -> Iterator[ExperimentRecord]:
    for i, value in enumerate(plan.values):
        cfg = plan.config_at(value)
        seed = point_seed(plan.seed, i)
        spec = None
        for det in plan.detectors:
            if det == EXPONENTS:
                rep = exponent_report(cfg)
                yield ExperimentRecord(plan.name, plan.param, value, EXPONENTS,
                                       e_edge=rep.e_edge, e_cloud=rep.e_cloud,
                                       sigma2_q1=rep.spec.sigma2_q1, sigma2_q2=rep.spec.sigma2_q2,
                                       seed=plan.seed)
                continue
            kind = Detector(det)
            if kind in (Detector.EDGE_LEARNED, Detector.CLOUD_LEARNED):
                from .learning import learned_record

                n_train = int(value) if plan.param == "training_size" else plan.training_size
                yield learned_record(plan, cfg, kind, n_train, seed, value, workers)
                continue
            if kind is Detector.CLOUD_OPTIMAL and spec is None:
                spec = solve_quantization_variance(cfg)
            yield estimate_pe(cfg, kind, plan.trials, seed, spec=spec, workers=workers,
                              sweep=plan.name, param=plan.param, value=value)


def run_sweep(plan: SweepPlan, workers: int = 1) -> Iterator[ExperimentRecord]:
    """Stream one record per (value, detector) in plan order."""
    return _sweep_records(plan, workers)


def figure_plans(name: str, base: SystemConfig | None = None, trials: int = DEFAULT_TRIALS,
                 seed: int = 0, training_size: int = 10_000, epochs: int = 3000) -> list[SweepPlan]:
    """Built-in sweeps behind each figure of the numerical study.

    ``training_size`` and ``epochs`` only matter for plans with learned
    detectors (fig7 trains at ``training_size``; fig8 sweeps it).
    """
    plans = _figure_plans(name, base, trials, seed)
    for p in plans:
        p.training_size, p.epochs = training_size, epochs
    return plans


def _figure_plans(name: str, base: SystemConfig | None, trials: int, seed: int) -> list[SweepPlan]:
    from .config import ReuseMode, default_config

    base = base or default_config()
    opt = [Detector.EDGE_OPTIMAL.value, Detector.CLOUD_OPTIMAL.value]
    learned = [Detector.EDGE_LEARNED.value, Detector.CLOUD_LEARNED.value]
    if name == "fig3":
        grid = [0.1, 0.3, 1, 3, 10, 30, 100, 300, 1000]
        return [SweepPlan(f"fig3:C={c}", base.replace(mu_g=0.0, fronthaul_capacity=c), "sigma2_g",
                          grid, [EXPONENTS], trials, seed) for c in (0.5, 5.0)]
    if name == "fig4":
        grid = [0.25, 0.5, 1, 2, 3, 4, 5, 6, 8, 10]
        return [SweepPlan(f"fig4:snr={s}", base.replace(mu_g=0.0, sigma2_g=1.0, snr_db=s),
                          "fronthaul_capacity", grid, [EXPONENTS], trials, seed) for s in (3.0, 8.0)]
    if name == "fig5":
        grid = [0.5, 1, 2, 4]
        return [SweepPlan(f"fig5:{mode.value}", base.replace(reuse_mode=mode, l_intervals=5),
                          "sigma2_g", grid, opt, trials, seed)
                for mode in (ReuseMode.NON_ORTHOGONAL, ReuseMode.ORTHOGONAL)]
    if name == "fig6":
        return [SweepPlan("fig6", base.replace(l_intervals=5), "fronthaul_capacity",
                          [0.25, 0.5, 1, 2, 5, 10], opt, trials, seed)]
    if name == "fig7":
        return [SweepPlan("fig7", base.replace(fronthaul_capacity=5.0, l_intervals=5), "rho",
                          [0.0, 0.25, 0.5, 0.75, 0.95], opt + learned, trials, seed)]
    if name == "fig7b":
        grid = [-5.0, 0.0, 5.0, 10.0, 15.0]
        return [SweepPlan(f"fig7b:sigma2_g={g}",
                          base.replace(fronthaul_capacity=10.0, l_intervals=10, lam=8.0, sigma2_g=g),
                          "snr_db", grid, opt, trials, seed) for g in (1.0, 10.0)]
    if name == "fig8":
        return [SweepPlan("fig8", base.replace(fronthaul_capacity=5.0, l_intervals=5), "training_size",
                          [100, 1000, 10_000], learned + opt, trials, seed)]
    raise ValueError(f"unknown figure plan {name!r}")


FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig7b", "fig8")


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(records: Iterable[ExperimentRecord], out: str | Path | TextIO) -> int:
    """Write records with a header row; returns the number of records."""
    if isinstance(out, (str, Path)):
        try:
            with open(out, "w", newline="") as fh:
                return emit_csv(records, fh)
        except OSError as exc:
            raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc
    w = csv.writer(out, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    n = 0
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        n += 1
    return n


def read_csv(path: str | Path) -> list[ExperimentRecord]:
    """Parse an :func:`emit_csv` file back into records."""
    types = {"pe": float, "ci_lo": float, "ci_hi": float, "e_edge": float, "e_cloud": float,
             "sigma2_q1": float, "sigma2_q2": float, "trials": int, "seed": int}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                if k in types:
                    kw[k] = types[k](v) if v != "" else (0 if types[k] is int else None)
                elif k == "value":
                    try:
                        kw[k] = float(v)
                    except ValueError:
                        kw[k] = v
                else:
                    kw[k] = v
            out.append(ExperimentRecord(**kw))
    return out


def default_workers() -> int:
    return os.cpu_count() or 1
