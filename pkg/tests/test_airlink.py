import numpy as np
import pytest

from tbma.airlink import (ReceivedVector, read_traces, simulate_batch, simulate_interval,
                          simulate_interval_orthogonal, simulate_trace, write_traces)
from tbma.config import QoiPair, ReuseMode, default_config


def per_device_reference(cfg, theta1, theta2, n, rng):
    """Literal device-level simulator: Poisson population, one observation,
    one channel gain per device.  Used only as an oracle."""
    d = cfg.m_levels
    out = np.zeros((n, 2, d), dtype=complex)
    pmfs = {1: np.array(getattr(cfg, f"pmf_cell1_h{theta1}")), 2: np.array(getattr(cfg, f"pmf_cell2_h{theta2}"))}
    for t in range(n):
        for src in (1, 2):
            k = rng.poisson(cfg.lam)
            x = rng.choice(d, size=k, p=pmfs[src])
            h = cfg.mu_h + np.sqrt(cfg.sigma2_h / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
            g = cfg.mu_g + np.sqrt(cfg.sigma2_g / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
            np.add.at(out[t, src - 1], x, h)       # own cell
            np.add.at(out[t, 2 - src], x, g)       # neighbour
        out[t] += np.sqrt(cfg.noise_var / 2) * (rng.standard_normal((2, d)) + 1j * rng.standard_normal((2, d)))
    return out


def test_first_level_moments_under_h00():
    cfg = default_config()
    n = 400_000
    b = simulate_batch(cfg, np.zeros(n, int), np.zeros(n, int), np.random.default_rng(3), n_intervals=1)
    y = b.y1[:, 0, 0]
    # mean lambda (mu_H p + mu_G p) = 4 * 0.8
    assert abs(y.mean().real - 3.2) < 5 * np.sqrt(6.9 / n)
    assert abs(y.mean().imag) < 5 * np.sqrt(3.5 / n)
    # conditional on counts: variance lambda sigma_H^2 p + lambda sigma_G^2 p + 1/SNR on average
    resid = y - (b.counts1[:, 0, 0] * cfg.mu_h + b.counts2[:, 0, 0] * cfg.mu_g)
    assert resid.var() == pytest.approx(3.2 + cfg.noise_var, rel=0.01)
    # unconditionally the Poisson count variance adds lambda p (mu_H^2 + mu_G^2)
    assert y.var() == pytest.approx(3.2 + cfg.noise_var + 3.2, rel=0.01)


def test_matches_device_level_reference():
    cfg = default_config(sigma2_g=2.0, mu_g=0.5)
    n = 20_000
    ref = per_device_reference(cfg, 0, 1, n, np.random.default_rng(11))
    b = simulate_batch(cfg, np.zeros(n, int), np.ones(n, int), np.random.default_rng(12), n_intervals=1)
    for c, y in enumerate((b.y1[:, 0], b.y2[:, 0])):
        r = ref[:, c]
        se_mean = np.sqrt(r.var(axis=0) / n)
        assert np.all(np.abs(y.mean(axis=0) - r.mean(axis=0)) < 5 * np.sqrt(2) * se_mean)
        np.testing.assert_allclose(y.var(axis=0), r.var(axis=0), rtol=0.06)


def test_thinned_counts_are_independent_poisson():
    cfg = default_config()
    n = 100_000
    b = simulate_batch(cfg, np.zeros(n, int), np.zeros(n, int), np.random.default_rng(5), n_intervals=1)
    c = b.counts1[:, 0, :]
    np.testing.assert_allclose(c.mean(axis=0), 4 * np.array([0.4, 0.3, 0.2, 0.1]), atol=0.02)
    np.testing.assert_allclose(c.var(axis=0), 4 * np.array([0.4, 0.3, 0.2, 0.1]), rtol=0.03)
    cc = np.corrcoef(c.T)
    assert np.max(np.abs(cc - np.eye(4))) < 0.015
    assert b.n1[:, 0].var() == pytest.approx(4.0, rel=0.03)


def test_orthogonal_has_half_dims_and_no_interference():
    cfg = default_config(reuse_mode=ReuseMode.ORTHOGONAL, sigma2_g=100.0)
    n = 100_000
    b = simulate_batch(cfg, np.zeros(n, int), np.ones(n, int), np.random.default_rng(8), n_intervals=1)
    assert b.y1.shape == (n, 1, 2)
    np.testing.assert_allclose(b.y1[:, 0].mean(axis=0).real, [2.8, 1.2], atol=0.03)
    # 2 lambda p + 1/SNR per level (channel plus count variance); no sigma_G^2 = 100 term
    expected = 2 * 4 * np.array([0.7, 0.3]) + cfg.noise_var
    np.testing.assert_allclose(b.y1[:, 0].var(axis=0), expected, rtol=0.02)


def test_same_seed_same_output():
    cfg = default_config()
    a = simulate_batch(cfg, [0, 1, 1], [0, 1, 0], np.random.default_rng(42))
    b = simulate_batch(cfg, [0, 1, 1], [0, 1, 0], np.random.default_rng(42))
    np.testing.assert_array_equal(a.y1, b.y1)
    np.testing.assert_array_equal(a.counts2, b.counts2)


def test_interval_and_trace_helpers():
    cfg = default_config()
    rng = np.random.default_rng(0)
    r1, r2 = simulate_interval(cfg, QoiPair(0, 1), rng)
    assert r1.cell == 1 and r2.cell == 2 and r1.samples.shape == (4,)
    with pytest.raises(ValueError):
        simulate_interval_orthogonal(cfg, QoiPair(0, 1), rng)
    with pytest.raises(ValueError):
        simulate_interval(cfg.replace(reuse_mode=ReuseMode.ORTHOGONAL), QoiPair(0, 1), rng)
    tr = simulate_trace(cfg, QoiPair(1, 1), rng)
    assert tr.y1.shape == (5, 4) and len(tr.received) == 5
    np.testing.assert_array_equal(tr.n1, tr.counts1.sum(axis=1))


def test_received_vector_rejects_non_finite():
    with pytest.raises(ValueError):
        ReceivedVector(1, 1, np.array([1.0, np.nan]))


def test_trace_csv_round_trip(tmp_path):
    cfg = default_config(l_intervals=3)
    b = simulate_batch(cfg, [0, 1], [1, 1], np.random.default_rng(2))
    path = tmp_path / "t.csv"
    write_traces(b, path)
    back = read_traces(path)
    np.testing.assert_array_equal(back.y1, b.y1)
    np.testing.assert_array_equal(back.y2, b.y2)
    np.testing.assert_array_equal(back.theta2, b.theta2)
    assert path.read_text().splitlines()[0].startswith("trial,interval,cell,re_1")
