import numpy as np
import pytest

from rydclock.geometry import DEFAULT_LATTICE_CONSTANT
from rydclock.potentials import (DressingParams, PairOscillationData,
                                 SoftCorePotential, fit_soft_core,
                                 pair_oscillation_frequency, soft_core,
                                 weak_dressing_potential)

A_LAT = DEFAULT_LATTICE_CONSTANT
PAPER = DressingParams.from_hz(5.5e6, 11e6, 9.1)


def test_beta_paper_value():
    assert PAPER.beta == pytest.approx(0.25)


def test_weak_dressing_plateau_and_range():
    pot = weak_dressing_potential(PAPER)
    assert pot.v0 == pytest.approx(0.25 ** 3 * 5.5e6)  # h x 85.9 kHz
    assert pot.v0 == pytest.approx(85.9e3, rel=1e-3)
    assert pot.r_b == pytest.approx(2.73e-6, rel=0.01)
    assert pot.r_b / A_LAT == pytest.approx(4.75, rel=0.01)


def test_weak_dressing_scaling_in_delta():
    p2 = DressingParams(PAPER.omega_r, 2 * PAPER.delta, PAPER.c6)
    v1, v2 = weak_dressing_potential(PAPER), weak_dressing_potential(p2)
    assert v2.v0 == pytest.approx(v1.v0 / 8.0)
    assert v2.r_b == pytest.approx(v1.r_b * 2.0 ** (-1.0 / 6.0))


def test_soft_core_values():
    v = SoftCorePotential(v0=46.4e3, r_b=4.9 * A_LAT)
    assert soft_core(v, 0.0) == pytest.approx(46.4e3)
    assert soft_core(v, v.r_b) == pytest.approx(46.4e3 / 2.0)
    assert soft_core(v, 10 * A_LAT) == pytest.approx(
        46.4e3 / (1 + (10 / 4.9) ** 6))
    assert soft_core(v, 10 * A_LAT) == pytest.approx(640.0, rel=0.02)


def test_soft_core_monotone_decreasing():
    v = SoftCorePotential(v0=46.4e3, r_b=4.9 * A_LAT)
    r = np.linspace(0, 20 * A_LAT, 500)
    f = soft_core(v, r)
    assert np.all(np.diff(f) < 0)
    assert np.all((f / v.v0 > 0) & (f / v.v0 <= 1))


def test_negative_separation_rejected():
    v = SoftCorePotential(v0=1.0, r_b=1.0)
    with pytest.raises(ValueError):
        soft_core(v, -1.0)


def _synthetic_data(v0_hz=46.4e3, rb_lat=4.9, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    r = np.arange(1.0, 6.0)
    f = (v0_hz / 2.0) / (1.0 + (r / rb_lat) ** 6)
    err = np.maximum(noise * f, 1e-6 * v0_hz)
    f_obs = f + noise * f * rng.standard_normal(r.size)
    return PairOscillationData(tuple(r), tuple(f_obs), tuple(err))


def test_fit_noiseless_exact():
    pot, cov = fit_soft_core(_synthetic_data())
    assert pot.v0 == pytest.approx(46.4e3, rel=1e-6)
    assert pot.r_b / A_LAT == pytest.approx(4.9, rel=1e-6)
    assert cov.shape == (2, 2)


def test_fit_noisy_mean_unbiased():
    v0s, rbs = [], []
    for seed in range(100):
        pot, _ = fit_soft_core(_synthetic_data(noise=0.01, seed=seed))
        v0s.append(pot.v0)
        rbs.append(pot.r_b / A_LAT)
    assert abs(np.mean(v0s) - 46.4e3) < 3 * np.std(v0s) / 10.0
    assert abs(np.mean(rbs) - 4.9) < 3 * np.std(rbs) / 10.0


def test_fit_degenerate_data_rejected():
    with pytest.raises(ValueError):
        PairOscillationData((2.0, 2.0, 2.0), (1.0, 1.0, 1.0), (0.1, 0.1, 0.1))
    with pytest.raises(ValueError):
        fit_soft_core(PairOscillationData((1.0, 2.0), (10.0, 5.0), (0.1, 0.1)))


def test_csv_round_trip(tmp_path):
    data = _synthetic_data(noise=0.01)
    path = tmp_path / "pairs.csv"
    data.to_csv(path)
    back = PairOscillationData.from_csv(path)
    assert back.r_lat == data.r_lat
    assert np.allclose(back.freq_hz, data.freq_hz)


def test_pair_oscillation_noninteracting_limit():
    # additivity: without interactions the pair energy is twice the single
    assert abs(pair_oscillation_frequency(PAPER, 1.0)) < 1e-6


def test_pair_oscillation_perturbative_limit():
    p = DressingParams.from_hz(2 * 0.02 * 11e6, 11e6, 9.1)  # beta = 0.02
    pot = weak_dressing_potential(p)
    for r in (1 * A_LAT, 2 * A_LAT, 4 * A_LAT):
        exact = 2.0 * pair_oscillation_frequency(p, r)
        assert exact == pytest.approx(pot(r), rel=0.02)


def test_blockaded_value_closer_to_fitted_than_perturbative():
    # strong dressing suppresses the plateau below the beta^3 estimate
    v = 2.0 * pair_oscillation_frequency(PAPER, 2 * A_LAT)
    assert abs(v - 46.4e3) < abs(v - 80.6e3)


def test_invalid_dressing_params():
    with pytest.raises(ValueError):
        DressingParams(omega_r=-1.0, delta=1.0, c6=0.0)
    with pytest.raises(ValueError):
        DressingParams(omega_r=1.0, delta=0.0, c6=0.0)
