import math

import numpy as np
import pytest

from rydtrans import mc
from rydtrans.fitkit import poisson_pmf_vector
from rydtrans.mc import (ClickHistogram, ExperimentConfig, TimeTrace,
                         analytic_click_pmf, blocked_click_pmf,
                         simulate_cycle, simulate_run)
from rydtrans.presets import HISTOGRAM_OVERDISPERSION, histogram_config


def test_config_validation():
    with pytest.raises(ValueError, match="eta_det"):
        ExperimentConfig(eta_det=1.4)
    with pytest.raises(ValueError, match="blockade_leak"):
        ExperimentConfig(blockade_leak=-0.1)
    with pytest.raises(ValueError, match="pulse_duration must be positive"):
        ExperimentConfig(pulse_duration=0.0)
    with pytest.raises(ValueError, match="integer number of bins"):
        ExperimentConfig(pulse_duration=31.0, bin_width=2.0)
    with pytest.raises(ValueError, match="overdispersion"):
        ExperimentConfig(overdispersion=-0.2)
    with pytest.raises(ValueError, match="reduce bin_width"):
        ExperimentConfig(photon_rate_in=5000.0)


def test_config_derived_quantities(histogram_cfg):
    assert histogram_cfg.n_bins == 15
    assert histogram_cfg.mu_ref_detected() == pytest.approx(8.62, rel=1e-12)
    assert histogram_cfg.p_zero_stored() == pytest.approx(0.60, rel=1e-12)


def test_reference_limit_matches_poisson():
    cfg = ExperimentConfig(storage_mean=0.0)
    run = simulate_run(cfg, 50000, 3, gated=True)
    assert run.stored_histogram.size == 1  # nothing ever stored
    mu = cfg.mu_ref_detected()
    sigma = math.sqrt(mu / run.n_shots)
    assert run.histogram.mean == pytest.approx(mu, abs=4 * sigma)
    fano = run.histogram.variance / run.histogram.mean
    assert fano == pytest.approx(1.0, abs=0.02)


def test_leak_one_gated_equals_reference_exactly(histogram_cfg):
    cfg = ExperimentConfig(**{**histogram_cfg.as_dict(), "blockade_leak": 1.0})
    gated = simulate_run(cfg, 3000, 41, gated=True)
    ref = simulate_run(cfg, 3000, 41, gated=False)
    assert np.array_equal(gated.histogram.counts, ref.histogram.counts)
    assert np.array_equal(gated.trace.photons, ref.trace.photons)


def test_single_shot_equals_run(histogram_cfg):
    run = simulate_run(histogram_cfg, 1, 77, gated=True)
    cycle = simulate_cycle(histogram_cfg, 77, gated=True)
    assert cycle.total_clicks == run.histogram.mean * 1
    assert np.array_equal(
        np.asarray(cycle.clicks_per_bin, dtype=float) / histogram_cfg.eta_det,
        run.trace.photons)


def test_cycle_outcome_fields(histogram_cfg):
    stored_seen = unstored_seen = False
    for seed in range(40):
        out = simulate_cycle(histogram_cfg, seed)
        assert out.total_clicks == int(np.sum(out.clicks_per_bin))
        if out.n_stored == 0:
            assert math.isinf(out.decay_time_us)
            unstored_seen = True
        else:
            assert out.decay_time_us >= 0.0
            stored_seen = True
    assert stored_seen and unstored_seen


def test_stored_fraction_matches_p0(histogram_cfg):
    run = simulate_run(histogram_cfg, 50000, 5, gated=True)
    frac0 = run.stored_histogram[0] / run.n_shots
    sigma = math.sqrt(0.6 * 0.4 / run.n_shots)
    assert frac0 == pytest.approx(histogram_cfg.p_zero_stored(), abs=4 * sigma)


def test_histogram_invariants(small_run):
    hist = small_run.histogram
    assert hist.n_shots == hist.counts.sum()
    k = np.arange(hist.counts.size)
    mean = float((k * hist.counts).sum() / hist.n_shots)
    var = float(((k - mean) ** 2 * hist.counts).sum() / (hist.n_shots - 1))
    assert hist.mean == pytest.approx(mean, rel=1e-14)
    assert hist.variance == pytest.approx(var, rel=1e-12)


def test_histogram_validation():
    with pytest.raises(ValueError):
        ClickHistogram(np.array([]))
    with pytest.raises(ValueError):
        ClickHistogram(np.array([3.0, -1.0]))
    with pytest.raises(ValueError):
        ClickHistogram(np.zeros(5))


def test_overdispersion_reproduces_target_moments(histogram_cfg):
    cfg = ExperimentConfig(**{**histogram_cfg.as_dict(),
                              "overdispersion": HISTOGRAM_OVERDISPERSION})
    run = simulate_run(cfg, 100000, 13, gated=False)
    assert run.histogram.mean == pytest.approx(8.62, abs=0.04)
    assert run.histogram.variance == pytest.approx(9.87, abs=0.20)
    fano = run.histogram.variance / run.histogram.mean
    assert fano == pytest.approx(9.87 / 8.62, abs=0.02)


def test_trace_bin_means_match_reference_expectation(histogram_cfg):
    run = simulate_run(histogram_cfg, 30000, 29, gated=False)
    expected = (histogram_cfg.mu_bin_detected() / histogram_cfg.eta_det)
    assert np.all(np.abs(run.trace.photons - expected) < 5 * run.trace.stderr
                  + 1e-9)


def test_csv_round_trips(tmp_path, small_run):
    tpath = tmp_path / "trace.csv"
    small_run.trace.to_csv(tpath)
    back = TimeTrace.from_csv(tpath)
    assert np.allclose(back.t_us, small_run.trace.t_us, rtol=1e-12)
    assert np.allclose(back.photons, small_run.trace.photons, rtol=1e-12)
    hpath = tmp_path / "hist.csv"
    small_run.histogram.to_csv(hpath)
    hist = ClickHistogram.from_csv(hpath)
    assert np.array_equal(hist.counts, small_run.histogram.counts)
    with pytest.raises(ValueError, match="header"):
        TimeTrace.from_csv(hpath)


# ---------------------------------------------------------------------------
# analytic PMFs

def test_analytic_reference_is_pure_poisson(histogram_cfg):
    pmf = analytic_click_pmf(histogram_cfg, gated=False)
    expected = poisson_pmf_vector(histogram_cfg.mu_ref_detected(),
                                  pmf.size - 1)
    assert np.array_equal(pmf, expected)


def test_analytic_gated_reduces_to_reference_when_nothing_stored():
    cfg = ExperimentConfig(storage_mean=0.0)
    assert np.array_equal(analytic_click_pmf(cfg, gated=True),
                          analytic_click_pmf(cfg, gated=False))


def test_blocked_branch_permanent_blockade_is_delta():
    cfg = ExperimentConfig(storage_mean=0.51, blockade_leak=0.0,
                           tau_blockade_ms=1e6)
    pmf = blocked_click_pmf(cfg)
    assert pmf[0] == pytest.approx(1.0, abs=1e-6)
    assert pmf[1:].sum() < 1e-6


def test_blocked_branch_requires_storage():
    with pytest.raises(ValueError, match="storage_mean"):
        blocked_click_pmf(ExperimentConfig(storage_mean=0.0))


def test_analytic_pmfs_normalized(histogram_cfg):
    for gated in (False, True):
        pmf = analytic_click_pmf(histogram_cfg, gated=gated)
        assert abs(pmf.sum() - 1.0) < 1e-9
        assert np.all(pmf >= 0.0)
    cfg = ExperimentConfig(**{**histogram_cfg.as_dict(),
                              "overdispersion": HISTOGRAM_OVERDISPERSION})
    pmf = analytic_click_pmf(cfg, gated=True)
    assert abs(pmf.sum() - 1.0) < 1e-9


def test_blocked_quadrature_converged(histogram_cfg):
    # doubling the node count moves the PMF by far less than MC tolerance
    a = blocked_click_pmf(histogram_cfg)
    nodes = mc._GL_NODES
    try:
        mc._GL_NODES = 2 * nodes
        b = blocked_click_pmf(histogram_cfg)
    finally:
        mc._GL_NODES = nodes
    assert np.max(np.abs(a - b)) < 1e-10


def test_mc_matches_analytic_moderate_shots(histogram_cfg):
    for gated in (False, True):
        run = simulate_run(histogram_cfg, 20000, 101, gated=gated)
        pmf = analytic_click_pmf(histogram_cfg, gated=gated)
        emp = np.zeros(max(pmf.size, run.histogram.counts.size))
        emp[:run.histogram.counts.size] = run.histogram.pmf()
        full = np.zeros(emp.size)
        full[:pmf.size] = pmf
        tv = 0.5 * np.abs(emp - full).sum()
        assert tv < 0.02


def test_gated_histogram_is_p0_mixture(histogram_cfg):
    run = simulate_run(histogram_cfg, 100000, 55, gated=True)
    ref_pmf = analytic_click_pmf(histogram_cfg, gated=False)
    p0 = histogram_cfg.p_zero_stored()
    emp = np.zeros(max(ref_pmf.size, run.histogram.counts.size))
    emp[:run.histogram.counts.size] = run.histogram.pmf()
    diff = emp.copy()
    diff[:ref_pmf.size] -= p0 * ref_pmf
    # the subtracted curve is the stored-excitation branch: nonnegative up
    # to sampling noise and carrying 1 - p0 of the probability
    assert diff.min() > -0.005
    assert diff.sum() == pytest.approx(1.0 - p0, abs=0.01)


def test_overdispersed_analytic_matches_mc(histogram_cfg):
    cfg = ExperimentConfig(**{**histogram_cfg.as_dict(),
                              "overdispersion": HISTOGRAM_OVERDISPERSION})
    run = simulate_run(cfg, 50000, 71, gated=False)
    pmf = analytic_click_pmf(cfg, gated=False)
    emp = np.zeros(max(pmf.size, run.histogram.counts.size))
    emp[:run.histogram.counts.size] = run.histogram.pmf()
    full = np.zeros(emp.size)
    full[:pmf.size] = pmf
    assert 0.5 * np.abs(emp - full).sum() < 0.015
