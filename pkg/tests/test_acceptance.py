"""End-to-end acceptance criteria.

Each test prints a single PASS/FAIL line (visible with ``pytest -s``) and
asserts the stated tolerance.  Synthetic-data parameters are fixed-seed, so
every criterion is deterministic.
"""

import json

import numpy as np
import pytest

from oracles import (SpinEchoOracle, ku_contrast, ku_variance_ratio_min)
from rydclock import cli
from rydclock.ellipse import (EllipseModel, calibrated_pipeline, estimate_phi,
                              fisher_information_css)
from rydclock.exact_diag import PulseSequence, run_sequence
from rydclock.geometry import DEFAULT_LATTICE_CONSTANT, build_subarrays
from rydclock.potentials import (DressingParams, PairOscillationData,
                                 SoftCorePotential, fit_soft_core,
                                 weak_dressing_potential)
from rydclock.sampler import (NoiseSpec, sample_css, sample_sss,
                              sample_stability_run, zeta_for_variance_gain)
from rydclock.stability import (dz_from_record, fit_white_noise, freq_series,
                                overlapping_adev)
from rydclock.weak_dressing import (InteractionPhases, contrast, g2_correlator,
                                    scan_xi_vs_n, variance_ratio, wineland)

A_LAT = DEFAULT_LATTICE_CONSTANT
PAPER = DressingParams.from_hz(5.5e6, 11e6, 9.1)


def _report(num, label, ok, detail):
    print(f"[ACCEPTANCE {num:2d}] {'PASS' if ok else 'FAIL'} - {label}: {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


def test_criterion_01_soft_core_fit_round_trip():
    r = np.arange(1.0, 6.0, 0.5)
    f_true = (46.4e3 / 2.0) / (1.0 + (r / 4.9) ** 6)
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        f_obs = f_true + 0.01 * f_true * rng.standard_normal(r.size)
        pot, _ = fit_soft_core(PairOscillationData(tuple(r), tuple(f_obs),
                                                   tuple(0.01 * f_true)))
        if abs(pot.v0 - 46.4e3) < 400.0 and abs(pot.r_b / A_LAT - 4.9) < 0.2:
            hits += 1
    _report(1, "soft-core fit round trip", hits >= 90,
            f"{hits}/100 trials within +-0.4 kHz and +-0.2 a_lat (need >= 90)")


def test_criterion_02_weak_dressing_vs_brute_force():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 13))
        phi = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        phi[iu] = rng.uniform(-1.2, 1.2, iu[0].size)
        ph = InteractionPhases(phi=phi + phi.T, t_int=1.0)
        oracle = SpinEchoOracle(ph.phi)
        alpha = float(rng.uniform(0.0, np.pi))
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        worst = max(
            worst,
            abs(contrast(ph) - oracle.contrast()),
            abs(variance_ratio(ph, alpha) - oracle.variance_ratio(alpha)),
            abs(g2_correlator(ph, alpha, i, j) - oracle.g2(i, j, alpha)),
        )
    _report(2, "weak dressing vs state-vector oracle", worst < 1e-10,
            f"worst |analytic - oracle| = {worst:.2e} over 50 instances (< 1e-10)")


def test_criterion_03_one_axis_twisting_limit():
    worst = 0.0
    for rows, cols in [(2, 5), (5, 10), (10, 10)]:
        n = rows * cols
        phis = np.linspace(1e-6, np.pi / 2, 20001)
        with np.errstate(divide="ignore", over="ignore"):
            xi_curve = ku_variance_ratio_min(n, phis) / ku_contrast(n, phis) ** 2
        k = int(np.argmin(xi_curve))
        phi_opt, xi_ref = phis[k], xi_curve[k]
        diameter = np.hypot(2 * rows, 2 * cols) * A_LAT
        pot = SoftCorePotential(v0=46.4e3, r_b=1e3 * diameter)
        t_grid = phi_opt * np.linspace(0.9, 1.1, 41) / (np.pi * pot.v0)
        row = scan_xi_vs_n([(rows, cols)], pot, t_grid)[0]
        worst = max(worst, abs(row["xi_w_sq"] / xi_ref - 1.0))
    _report(3, "flat-potential limit matches one-axis twisting", worst < 0.01,
            f"worst relative deviation {worst:.2e} for N in (10, 50, 100) (< 1%)")


def test_criterion_04_ed_squeezing_curve_shape():
    g = build_subarrays(2, 2, 2, 2, 1)
    zero = run_sequence(g, PAPER, PulseSequence.spin_echo(0.0))
    t_grid = np.arange(0.5, 5.01, 0.5) * 1e-6
    xi_db = np.array([run_sequence(g, PAPER, PulseSequence.spin_echo(t)).xi_db
                      for t in t_grid])
    k = int(np.argmin(xi_db))
    ok = (abs(zero.xi_db) < 1e-6 and abs(zero.contrast - 1.0) < 1e-9
          and xi_db[k] < 0.0 and 0 < k < xi_db.size - 1
          and xi_db[-1] > xi_db[k])
    _report(4, "2x2 exact-diag squeezing curve", ok,
            f"xi(0) = {zero.xi_db:.2e} dB, min {xi_db[k]:.2f} dB at "
            f"{t_grid[k] * 1e6:.1f} us (interior), endpoint {xi_db[-1]:.2f} dB")


def test_criterion_05_perturbative_cross_check():
    weak = DressingParams.from_hz(2 * 0.05 * 11e6, 11e6, 9.1)  # beta = 0.05
    g = build_subarrays(3, 3, 2, 2, 1)
    pot = weak_dressing_potential(weak)
    from rydclock.exact_diag import dressed_pair_shift
    from rydclock.geometry import distance_matrix

    r = distance_matrix(g)
    phi_mat = np.zeros_like(r)
    t_grid = np.linspace(1e-6, 200e-6, 120)
    best = None
    for t_int in t_grid:
        for i in range(9):
            for j in range(i + 1, 9):
                phi_mat[i, j] = phi_mat[j, i] = np.pi * pot(r[i, j]) * t_int
        obs = wineland(InteractionPhases(phi=phi_mat.copy(), t_int=t_int))
        if best is None or obs.xi_w_sq < best[1].xi_w_sq:
            best = (t_int, obs)
    t_opt, obs = best
    res = run_sequence(g, weak, PulseSequence.spin_echo(t_opt))
    rel = abs(res.xi_w_sq / obs.xi_w_sq - 1.0)
    _report(5, "ED vs weak-dressing at beta = 0.05, N = 3x3", rel < 0.10,
            f"xi_ed = {res.xi_w_sq:.4f} vs xi_weak = {obs.xi_w_sq:.4f} at "
            f"t = {t_opt * 1e6:.0f} us: {100 * rel:.2f}% (< 10%)")


def test_criterion_06_qpn_variance_and_sql_amplitude():
    noise = NoiseSpec(contrast=0.95)
    rec = sample_css(70, noise, 100_000, seed=1)
    var = dz_from_record(rec).var(ddof=1)
    se = var * np.sqrt(2.0 / (rec.n_shots - 1))
    z_var = (var - 1.0 / 140.0) / se

    run = sample_stability_run(70, noise, 4096, t_dark=0.101, seed=2)
    curve = overlapping_adev(freq_series(dz_from_record(run), 0.95, 0.101, 1.4))
    fit = fit_white_noise(curve)
    predicted = np.sqrt(2.0 / 70.0) / (0.95 * 0.101) * np.sqrt(1.4)
    z_amp = (fit.amplitude - predicted) / fit.amplitude_err
    ok = abs(z_var) < 3.0 and abs(z_amp) < 3.0 and not fit.flags
    _report(6, "QPN variance and SQL Allan amplitude", ok,
            f"Var(dz) = {var:.6f} vs 1/140 ({z_var:+.2f} sigma); white amp "
            f"{fit.amplitude:.3f} vs SQL {predicted:.3f} ({z_amp:+.2f} sigma)")


def test_criterion_07_stability_gain_transfer():
    noise = NoiseSpec(contrast=0.95)
    zeta = zeta_for_variance_gain(70, 2.30)
    css = sample_stability_run(70, noise, 4096, t_dark=0.101, seed=3)
    sss = sample_stability_run(70, noise, 4096, t_dark=0.101, seed=3, zeta=zeta)
    amp = {}
    for label, rec in (("css", css), ("sss", sss)):
        curve = overlapping_adev(freq_series(dz_from_record(rec), 0.95, 0.101, 1.4))
        amp[label] = fit_white_noise(curve).amplitude
    ratio_db = 20.0 * np.log10(amp["css"] / amp["sss"])
    _report(7, "interleaved CSS/SSS stability gain", abs(ratio_db - 2.30) < 0.3,
            f"fitted ADEV-amplitude ratio {ratio_db:.2f} dB "
            f"(target 2.30 +- 0.3 dB, zeta = {zeta:.4f})")


def test_criterion_08_calibrated_ellipse_pipeline():
    phi_true = np.radians(30.0)
    noise = NoiseSpec(contrast=0.95, differential_phase=phi_true,
                      laser_phase_mode="random_uniform")
    init = EllipseModel(phi=np.radians(45.0), contrast=0.9, y0=0.5, n_atoms=70)
    zeta0 = zeta_for_variance_gain(70, 2.0)
    sss_model = EllipseModel(phi=phi_true, contrast=0.95, y0=0.5,
                             zeta0=zeta0, zeta1=1.0, n_atoms=70)

    css = sample_css(70, noise, 2000, seed=42)
    sss = sample_sss(70, noise, sss_model, 2000, seed=42)
    first, second = np.arange(1000), np.arange(1000, 2000)
    res_css = calibrated_pipeline(css.subset(first), css.subset(second), init,
                                  n_bootstrap=50, seed=0)
    res_sss = calibrated_pipeline(sss.subset(first), sss.subset(second), init,
                                  n_bootstrap=50, seed=0)

    combined = np.hypot(res_css.stat_err, res_css.calib_err)
    dev_sigma = abs(res_css.phi_hat - phi_true) / combined
    jk_dev = max(abs(res_css.jackknife.mean - res_css.phi_hat),
                 abs(res_sss.jackknife.mean - res_sss.phi_hat))
    ratio_db = 20.0 * np.log10(res_css.adev.adev[0] / res_sss.adev.adev[0])
    ok = dev_sigma < 3.0 and jk_dev < 1e-9 and 1.0 <= ratio_db <= 3.0
    _report(8, "calibrated ellipse pipeline", ok,
            f"phi = {np.degrees(res_css.phi_hat):.2f} deg "
            f"({dev_sigma:.2f} of combined sigma, "
            f"+-{np.degrees(combined):.2f} deg); jackknife identity "
            f"{jk_dev:.1e} (< 1e-9); SSS/CSS short-time variance ratio "
            f"{ratio_db:.2f} dB (2 +- 1 dB)")


def test_criterion_09_fisher_information_and_mle_efficiency():
    model = EllipseModel(phi=0.0, contrast=0.95, y0=0.5, n_atoms=70)
    i_zero = fisher_information_css(model, 0.0, n_theta=720)
    i_thirty = fisher_information_css(model, np.radians(30.0), n_theta=720)

    noise = NoiseSpec(contrast=0.95, differential_phase=np.radians(30.0),
                      laser_phase_mode="random_uniform")
    errs = []
    for rep in range(50):
        rec = sample_css(70, noise, 10_000, seed=500 + rep)
        phi = estimate_phi(rec, model, n_theta=180, coarse=31)
        errs.append(phi - np.radians(30.0))
    rmse = float(np.sqrt(np.mean(np.square(errs))))
    ratio = rmse * np.sqrt(10_000 * i_thirty)
    ok = i_zero < i_thirty and 0.8 <= ratio <= 1.2
    _report(9, "Fisher information and MLE efficiency", ok,
            f"I(0) = {i_zero:.3g} < I(30 deg) = {i_thirty:.3f}; "
            f"RMSE x sqrt(n I) = {ratio:.3f} (within 20% of 1)")


def test_criterion_10_manifest_replay_determinism(tmp_path):
    clock_cfg = tmp_path / "clock.json"
    clock_cfg.write_text(json.dumps({
        "seed": 7, "n_atoms": 70, "n_shots": 256, "t_dark_ms": 101.0,
        "contrast": 0.95, "laser_phase_mode": "white", "sigma_theta": 0.02,
    }))
    ellipse_cfg = tmp_path / "ellipse.json"
    ellipse_cfg.write_text(json.dumps({
        "seed": 9, "n_atoms": 70, "n_shots": 300, "contrast": 0.95,
        "phi_deg": 30.0, "ensembles": ["css", "sss"], "zeta0": 0.8,
    }))
    runs = [
        ("simulate-clock", str(clock_cfg), ["record.csv", "adev.csv"]),
        ("sample-ellipse", str(ellipse_cfg),
         ["ellipse_css.csv", "ellipse_sss.csv"]),
    ]
    identical = True
    for command, cfg, outputs in runs:
        out = tmp_path / command
        assert cli.main([command, "--config", cfg, "--out-dir", str(out)]) == 0
        before = {name: (out / name).read_bytes() for name in outputs}
        for name in outputs:
            (out / name).unlink()
        manifest = str(out / f"{command}.manifest.json")
        assert cli.main(["--from-manifest", manifest]) == 0
        identical &= all((out / name).read_bytes() == before[name]
                         for name in outputs)
    _report(10, "manifest replay determinism", identical,
            "simulate-clock and sample-ellipse outputs byte-identical on replay")
