"""Matched-filter-level simulation of the TBMA uplink.

Each active device adds its channel gain onto the unit vector of the level
it observed.  Conditioned on the per-level device counts, the sum of ``n``
i.i.d. CN(mu, s2) gains is exactly CN(n mu, n s2), so one Gaussian draw per
sample replaces ``n`` per-device draws without changing the distribution.
Likewise per-level counts are drawn directly as independent Poisson
variables (Poisson thinning of the total Poisson(lambda) activity).

Complex Gaussian convention everywhere: CN(mu, s2) has real mean ``mu`` and
total variance ``s2`` split equally between real and imaginary parts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .config import QoiPair, SystemConfig, pmf_table


@dataclass(frozen=True)
class ReceivedVector:
    cell: int
    interval: int
    samples: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("received vector has non-finite entries")


@dataclass(frozen=True)
class CollectionTrace:
    """L conditionally i.i.d. intervals for one fixed QoI pair.

    ``n1``/``n2`` are total active devices per interval; ``counts1``/``counts2``
    hold the per-level counts (in the reuse mode's resolution).
    """

    qoi: QoiPair
    n1: np.ndarray
    n2: np.ndarray
    counts1: np.ndarray
    counts2: np.ndarray
    received: list[tuple[ReceivedVector, ReceivedVector]]

    @property
    def y1(self) -> np.ndarray:
        return np.stack([r[0].samples for r in self.received])

    @property
    def y2(self) -> np.ndarray:
        return np.stack([r[1].samples for r in self.received])


@dataclass
class SimBatch:
    """Vectorised simulation output; arrays are ``(trials, L, D)``."""

    theta1: np.ndarray
    theta2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    counts1: np.ndarray
    counts2: np.ndarray

    @property
    def n1(self) -> np.ndarray:
        return self.counts1.sum(axis=-1)

    @property
    def n2(self) -> np.ndarray:
        return self.counts2.sum(axis=-1)


def complex_normal(rng: np.random.Generator, var, size=None) -> np.ndarray:
    """Zero-mean circular complex Gaussian with total variance ``var``."""
    var = np.asarray(var, dtype=float)
    shape = var.shape if size is None else size
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def combine_counts(cfg: SystemConfig, own: np.ndarray, other: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Received samples given per-level in-cell (``own``) and cross-cell counts."""
    mean = own * cfg.mu_h + other * cfg.interference_mean
    var = own * cfg.sigma2_h + other * cfg.interference_var + cfg.noise_var
    return mean + complex_normal(rng, var, size=np.shape(mean))


def simulate_batch(cfg: SystemConfig, theta1, theta2, rng: np.random.Generator,
                   n_intervals: int | None = None) -> SimBatch:
    """Simulate ``n_intervals`` (default ``cfg.l_intervals``) per QoI pair."""
    theta1 = np.asarray(theta1, dtype=np.int64)
    theta2 = np.asarray(theta2, dtype=np.int64)
    L = cfg.l_intervals if n_intervals is None else n_intervals
    table = pmf_table(cfg)
    shape = (theta1.size, L, cfg.dims)
    rate1 = cfg.lam * table[0, theta1][:, None, :]
    rate2 = cfg.lam * table[1, theta2][:, None, :]
    counts1 = rng.poisson(np.broadcast_to(rate1, shape))
    counts2 = rng.poisson(np.broadcast_to(rate2, shape))
    if cfg.orthogonal:
        zeros = np.zeros_like(counts1)
        y1 = combine_counts(cfg, counts1, zeros, rng)
        y2 = combine_counts(cfg, counts2, zeros, rng)
    else:
        y1 = combine_counts(cfg, counts1, counts2, rng)
        y2 = combine_counts(cfg, counts2, counts1, rng)
    return SimBatch(theta1, theta2, y1, y2, counts1, counts2)


def _interval(cfg: SystemConfig, qoi: QoiPair, rng) -> tuple[ReceivedVector, ReceivedVector]:
    b = simulate_batch(cfg, [qoi[0]], [qoi[1]], rng, n_intervals=1)
    return ReceivedVector(1, 1, b.y1[0, 0]), ReceivedVector(2, 1, b.y2[0, 0])


def simulate_interval(cfg: SystemConfig, qoi: QoiPair, rng: np.random.Generator):
    """One collection interval under non-orthogonal reuse (length-M vectors)."""
    if cfg.orthogonal:
        raise ValueError("simulate_interval requires NonOrthogonal reuse")
    return _interval(cfg, qoi, rng)


def simulate_interval_orthogonal(cfg: SystemConfig, qoi: QoiPair, rng: np.random.Generator):
    """One interval under rate-1/2 reuse: M/2 levels, no inter-cell term."""
    if not cfg.orthogonal:
        raise ValueError("simulate_interval_orthogonal requires Orthogonal reuse")
    return _interval(cfg, qoi, rng)


def simulate_trace(cfg: SystemConfig, qoi: QoiPair, rng: np.random.Generator) -> CollectionTrace:
    b = simulate_batch(cfg, [qoi[0]], [qoi[1]], rng)
    received = [
        (ReceivedVector(1, l + 1, b.y1[0, l]), ReceivedVector(2, l + 1, b.y2[0, l]))
        for l in range(cfg.l_intervals)
    ]
    return CollectionTrace(QoiPair(*qoi), b.n1[0], b.n2[0], b.counts1[0], b.counts2[0], received)


def trace_header(dims: int) -> list[str]:
    return (["trial", "interval", "cell"]
            + [f"re_{m}" for m in range(1, dims + 1)]
            + [f"im_{m}" for m in range(1, dims + 1)]
            + ["theta1", "theta2", "n1", "n2"])


def iter_trace_rows(batch: SimBatch, first_trial: int = 0) -> Iterable[list]:
    for t in range(batch.theta1.size):
        for l in range(batch.y1.shape[1]):
            for cell, y in ((1, batch.y1), (2, batch.y2)):
                v = y[t, l]
                yield ([first_trial + t, l + 1, cell]
                       + [format(x, ".17g") for x in v.real]
                       + [format(x, ".17g") for x in v.imag]
                       + [int(batch.theta1[t]), int(batch.theta2[t]),
                          int(batch.n1[t, l]), int(batch.n2[t, l])])


def write_traces(batch: SimBatch, out: str | Path | TextIO) -> None:
    """Dump a batch as CSV, one row per (trial, interval, cell)."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_traces(batch, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(trace_header(batch.y1.shape[-1]))
    w.writerows(iter_trace_rows(batch))


def read_traces(path: str | Path) -> SimBatch:
    """Read back a :func:`write_traces` file.

    Per-level counts are not part of the file and come back as zeros.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dims = sum(1 for h in header if h.startswith("re_"))
    trials = max(int(r[0]) for r in body) + 1
    L = max(int(r[1]) for r in body)
    y = np.zeros((2, trials, L, dims), dtype=complex)
    th = np.zeros((2, trials), dtype=np.int64)
    for r in body:
        t, l, c = int(r[0]), int(r[1]) - 1, int(r[2]) - 1
        vals = np.array(r[3:3 + 2 * dims], dtype=float)
        y[c, t, l] = vals[:dims] + 1j * vals[dims:]
        th[0, t], th[1, t] = int(r[3 + 2 * dims]), int(r[4 + 2 * dims])
    zeros = np.zeros(y.shape[1:], dtype=np.int64)
    return SimBatch(th[0], th[1], y[0], y[1], zeros, zeros.copy())
