import math

import numpy as np
import pytest

from echomem.photonstats import (
    CountHistogram,
    QubitRun,
    basis_fidelity,
    check_bound_convention,
    check_crossover_convention,
    classical_bound,
    crossover_mu,
    expected_fidelity,
    expected_state_fidelities,
    simulate_counts,
    snr,
    total_fidelity,
    visibility_fidelity,
)

FIG_ETA = 0.082
FIG_NOISE = 0.0086


def test_histogram_validation():
    with pytest.raises(ValueError, match="length"):
        CountHistogram(np.array([0.0, 1.0, 2.0]), np.array([1]), n_trials=10)
    with pytest.raises(ValueError, match="outside"):
        CountHistogram(np.array([0.0, 1.0]), np.array([1]), 10, windows={"w": (0.5, 2.0)})


def test_simulate_counts_deterministic():
    run = QubitRun("e", 1.0, 0.1, 0.001, 1000)
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    probs = np.array([0.0, 0.05, 0.0])
    a = simulate_counts(run, probs, edges, seed=42)
    b = simulate_counts(run, probs, edges, seed=42)
    assert np.array_equal(a.counts, b.counts)
    c = simulate_counts(run, probs, edges, seed=43)
    assert not np.array_equal(a.counts, c.counts)


def test_simulate_counts_zero_everything():
    run = QubitRun("e", 0.0, 0.0, 0.0, 500)
    edges = np.linspace(0, 4, 5)
    hist = simulate_counts(run, np.zeros(4), edges, seed=1)
    assert np.all(hist.counts == 0)


def test_simulate_counts_linearity_in_trials():
    edges = np.array([0.0, 1.0])
    probs = np.array([0.02])
    means = []
    for n_trials in (10_000, 20_000):
        run = QubitRun("e", 1.0, 0.1, 0.0, n_trials)
        reps = [simulate_counts(run, probs, edges, seed=s).counts[0] for s in range(60)]
        means.append(np.mean(reps))
    assert means[1] / means[0] == pytest.approx(2.0, rel=0.05)


def test_snr_definition():
    hist = CountHistogram(np.array([0.0, 1.0]), np.array([123]), 1, windows={"sig": (0.0, 1.0)})
    result = snr(hist, "sig", 10.0)
    assert result.snr == pytest.approx(11.3)
    assert not result.clamped


def test_snr_zero_noise_sentinel():
    hist = CountHistogram(np.array([0.0, 1.0]), np.array([50]), 1, windows={"sig": (0.0, 1.0)})
    result = snr(hist, "sig", 0.0)
    assert math.isinf(result.snr)
    assert result.zero_noise


def test_snr_clamps_negative_signal():
    hist = CountHistogram(np.array([0.0, 1.0]), np.array([3]), 1, windows={"sig": (0.0, 1.0)})
    result = snr(hist, "sig", 10.0)
    assert result.snr == 0.0
    assert result.clamped


def test_single_photon_equivalent_arithmetic():
    # long-storage run: SNR 5.54 at 4.14 mean photons per qubit
    assert 5.54 / 4.14 == pytest.approx(1.34, abs=0.005)


def test_basis_fidelity_cases():
    assert basis_fidelity(10.0, 0.0) == 1.0
    assert basis_fidelity(0.0, 7.0) == 0.5
    assert basis_fidelity(11.3, 1.0) == pytest.approx(0.9248, abs=5e-5)


def test_visibility_fidelity_cases():
    assert visibility_fidelity(9.0, 0.0) == 1.0
    assert visibility_fidelity(4.0, 4.0) == 0.5
    # measured superposition fidelity 85.8% corresponds to V = 0.716
    v = 2 * 0.858 - 1
    assert v == pytest.approx(0.716, abs=1e-12)
    with pytest.raises(ValueError, match="c_max"):
        visibility_fidelity(1.0, 2.0)


def test_total_fidelity_reference_point():
    assert total_fidelity(0.927, 0.927, 0.858, 0.856) == pytest.approx(0.880, abs=1e-3)
    assert total_fidelity(1, 1, 1, 1) == 1.0
    assert total_fidelity(0.5, 0.5, 0.5, 0.5) == 0.5
    with pytest.raises(ValueError):
        total_fidelity(1.2, 0.5, 0.5, 0.5)


def test_basis_and_visibility_estimators_agree():
    rng = np.random.default_rng(14)
    for s in rng.uniform(0.1, 50, 50):
        f_basis = basis_fidelity(s, 1.0)
        f_vis = visibility_fidelity(s + 1.0, 1.0)
        assert f_basis == pytest.approx((s + 1) / (s + 2), rel=1e-12)
        assert f_vis == pytest.approx(f_basis, rel=1e-12)


def test_classical_bound_single_photon_limit():
    assert classical_bound(1e-4, 1e-5) == pytest.approx(2.0 / 3.0, abs=1e-3)


def test_classical_bound_full_acceptance_series():
    mu = 1.16
    pmf = []
    p = math.exp(-mu)
    for n in range(0, 60):
        pmf.append(p)
        p = p * mu / (n + 1)
    series = sum(p * (n + 1) / (n + 2) for n, p in enumerate(pmf))
    assert classical_bound(mu, 1.0) == pytest.approx(series, abs=1e-9)


def test_classical_bound_reference_value(cfg):
    check = check_bound_convention(1.16, FIG_ETA, cfg["analysis"]["classical_bound_reference"])
    assert abs(check.computed - 0.821) <= 0.015
    assert not check.discrepant


def test_classical_bound_monotonicity():
    mus = np.linspace(0.1, 4.0, 25)
    bounds = [classical_bound(m, 0.082) for m in mus]
    assert np.all(np.diff(bounds) >= -1e-12)
    etas = np.linspace(0.02, 1.0, 25)
    bounds = [classical_bound(1.16, e) for e in etas]
    assert np.all(np.diff(bounds) <= 1e-12)


def test_expected_fidelity_limits():
    assert expected_fidelity(1.0, 0.1, 0.0) == 1.0
    mus = np.linspace(0.05, 3.0, 30)
    values = [expected_fidelity(m, FIG_ETA, FIG_NOISE) for m in mus]
    assert np.all(np.diff(values) > 0)


def test_expected_fidelity_reference_point():
    got = expected_fidelity(1.16, FIG_ETA, FIG_NOISE)
    assert got == pytest.approx(0.880, abs=0.021)
    per_state = expected_state_fidelities(1.16, FIG_ETA, FIG_NOISE)
    assert per_state["e"] == per_state["l"] > per_state["e+l"]


def test_crossover_vanishes_with_noise():
    assert crossover_mu(FIG_ETA, 1e-7) < 0.05


def test_crossover_requires_crossing():
    with pytest.raises(ValueError, match="cross"):
        crossover_mu(FIG_ETA, 0.5)


def test_crossover_convention_check_flags_honestly(cfg):
    """The computed crossover either matches the quoted 0.41 or the
    discrepancy is flagged and logged; it is never silently adjusted."""
    check = check_crossover_convention(FIG_ETA, FIG_NOISE, cfg["analysis"]["crossover_reference"])
    within = abs(check.computed - 0.41) <= 0.05
    assert within or check.discrepant


def test_counting_pipeline_statistics():
    """Seeded end-to-end runs reproduce the analytic SNR expectation and
    its Poisson-propagated variance."""
    mu, eta, n_trials = 1.18, FIG_ETA, 35_000
    noise = mu * eta / 11.3
    edges = np.array([0.0, 1.0])
    probs = np.array([mu * eta])
    run = QubitRun("e", mu, eta, noise, n_trials)
    values = []
    sigmas = []
    for seed in range(200):
        hist = simulate_counts(run, probs, edges, windows={"sig": (0.0, 1.0)}, seed=seed)
        # the reference here is the exact noise expectation (zero spread)
        result = snr(hist, "sig", (noise * n_trials, 0.0))
        values.append(result.snr)
        sigmas.append(result.sigma)
    values = np.asarray(values)
    assert values.mean() == pytest.approx(11.3, rel=0.02)
    assert np.var(values) == pytest.approx(np.mean(sigmas) ** 2, rel=0.20)


def test_fig3_monte_carlo_within_three_sigma():
    mu, eta, n_trials = 1.18, FIG_ETA, 35_000
    noise = mu * eta / 11.3
    run = QubitRun("e", mu, eta, noise, n_trials)
    hist = simulate_counts(
        run, np.array([mu * eta]), np.array([0.0, 1.0]), windows={"sig": (0.0, 1.0)}, seed=7
    )
    result = snr(hist, "sig", noise * n_trials)
    assert abs(result.snr - 11.3) < 3 * result.sigma
