"""Acceptance criteria 1-10, each at its stated tolerance.

The Monte Carlo criteria share session-scoped reports (base seed 0, 100
paired trials, baseline M=N=K=4, L=11, R=0.5, P=noise=1, 30 outer
iterations).  A PASS/FAIL line per criterion is printed in the terminal
summary.
"""

import dataclasses
import math

import numpy as np
import pytest

from conftest import random_instance, record_criterion
from fcla import fp
from fcla.cli import main
from fcla.geometry import ArrayConfig
from fcla.orchestrator import SolverOptions, SystemSetup, Variant, monte_carlo
from fcla.position import grad_psi, grad_z, total_objective
from fcla.channel import build_channel
from fcla.geometry import AntennaLayout

pytestmark = pytest.mark.slow

TRIALS = 100
BASELINE = SystemSetup(ArrayConfig(4, 4, 0.5))
OPTIONS = SolverOptions(max_outer_iterations=30)
ALL = list(Variant)
MAIN = [Variant.FIXED_FP, Variant.FP_MA_ADAM, Variant.FP_MA_GRID]


def gain(report, variant=Variant.FP_MA_ADAM, value=None):
    return report.get(variant, value).final_mean / report.get(Variant.FIXED_FP, value).final_mean - 1.0


@pytest.fixture(scope="session")
def baseline():
    rep = monte_carlo(BASELINE, ALL, TRIALS, 0, OPTIONS)
    assert rep.failure_count == 0
    return rep


# -- 1 ---------------------------------------------------------------------


def _objective(inst, layout):
    H = build_channel(inst.config, layout, inst.scenario)
    return total_objective(H, inst.F, inst.eps, inst.mu, inst.noise)


def _rel(a, b):
    # central differences carry ~1e-9 absolute roundoff (eps |f| / h), so
    # gradients below 1e-3 are compared on that absolute scale instead
    return abs(a - b) / max(abs(a), abs(b), 1e-3)


def test_criterion_1_gradient_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    count = 0
    for i in range(60):
        M, N, K = (int(rng.integers(1, 5)) for _ in range(3))
        L = int(rng.integers(1, 6))
        inst = random_instance(7000 + i, M=M, N=N, K=K, L=L)
        m, n = int(rng.integers(M)), int(rng.integers(N))
        lay = inst.layout

        h = 1e-6
        psi_p, psi_m = lay.psi.copy(), lay.psi.copy()
        psi_p[m, n] += h
        psi_m[m, n] -= h
        fd = (_objective(inst, AntennaLayout(psi_p, lay.z))
              - _objective(inst, AntennaLayout(psi_m, lay.z))) / (2 * h) / inst.config.radius
        an = grad_psi(inst.config, lay, inst.scenario, inst.F, inst.eps, inst.mu, m, n)
        worst = max(worst, _rel(an, fd))

        h = 1e-7
        zp, zm = lay.z.copy(), lay.z.copy()
        zp[m] += h
        zm[m] -= h
        fd = (_objective(inst, AntennaLayout(lay.psi, zp))
              - _objective(inst, AntennaLayout(lay.psi, zm))) / (2 * h)
        an = grad_z(inst.config, lay, inst.scenario, inst.F, inst.eps, inst.mu, m)
        worst = max(worst, _rel(an, fd))
        count += 1
    ok = record_criterion(1, count >= 50 and worst < 1e-5,
                          f"{count} instances, worst relative error {worst:.2e} (< 1e-5)")
    assert ok


# -- 2 ---------------------------------------------------------------------


def _scan_lambda(C, D, P, points=1_000_000):
    w, U = np.linalg.eigh(C)
    w = np.clip(w, 0, None)
    num = np.sum(np.abs(U.conj().T @ D) ** 2, axis=1)
    lo, hi = 0.0, math.sqrt(np.sum(np.abs(D) ** 2) / P)
    for _ in range(2):
        grid = np.linspace(lo, hi, points)
        with np.errstate(divide="ignore"):
            vals = np.concatenate([
                np.sum(num[None] / (w[None] + g[:, None]) ** 2, axis=1)
                for g in np.array_split(grid, 10)])
        i = int(np.argmin(np.abs(vals - P)))
        step = grid[1] - grid[0]
        lo, hi = max(0.0, grid[i] - step), grid[i] + step
    return grid[i]


def test_criterion_2_fp_identities():
    eps_err = lag_err = lam_err = pow_err = 0.0
    checked = 0
    for seed in range(20):
        inst = random_instance(seed, M=4, N=4, K=4, L=11, random_beam=seed % 2 == 0)
        direct = np.array([fp.sinr(inst.H, inst.F, inst.noise, k) for k in range(4)])
        eps_err = max(eps_err, np.max(np.abs(inst.eps - direct)))
        lag = fp.lagrangian_value(inst.H, inst.F, inst.eps, inst.mu, inst.noise)
        lag_err = max(lag_err, abs(lag - np.sum(np.log1p(direct))))

        S = fp.build_surrogates(inst.H, inst.eps, inst.mu, inst.noise)
        P = 0.05 if seed % 3 == 0 else 1.0
        F, lam = fp.solve_beamformer(S, P)
        if lam > 0:
            checked += 1
            lam_err = max(lam_err, abs(lam - _scan_lambda(S.C, S.D, P)) / lam)
            pow_err = max(pow_err, abs(np.sum(np.abs(F) ** 2) - P) / P)
    ok = eps_err <= 1e-12 and lag_err <= 1e-10 and lam_err <= 1e-5 and pow_err <= 1e-8 and checked > 0
    record_criterion(2, ok, f"eps {eps_err:.1e}, Lagrangian {lag_err:.1e}, "
                            f"lambda rel {lam_err:.1e} over {checked} solves, power rel {pow_err:.1e}")
    assert ok


# -- 3 ---------------------------------------------------------------------


def test_criterion_3_monotone_convergence(baseline):
    worst_drop = 0.0
    for variant in ALL:
        for t in baseline.get(variant).trials:
            r = np.array(t.trace.sum_rate)
            if len(r) > 2:
                worst_drop = max(worst_drop, float(np.max(r[1:-1] - r[2:])))
    fixed = baseline.get(Variant.FIXED_FP).final_rates
    adam = baseline.get(Variant.FP_MA_ADAM).final_rates
    dominated = int(np.sum(adam >= fixed - 1e-9))
    samples = min(baseline.get(v).sample_count for v in ALL)
    ok = worst_drop <= 1e-6 and dominated == len(fixed) and samples == TRIALS
    record_criterion(3, ok, f"largest drop {worst_drop:.1e} (<= 1e-6), "
                            f"FpMaAdam >= FixedFP on {dominated}/{len(fixed)} seeds")
    assert ok


# -- 4 ---------------------------------------------------------------------


def test_criterion_4_baseline_gain(baseline):
    means = {v: baseline.get(v).final_mean for v in MAIN}
    g = gain(baseline)
    ordered = means[Variant.FP_MA_ADAM] > means[Variant.FP_MA_GRID] > means[Variant.FIXED_FP]
    ok = g >= 0.15 and ordered
    record_criterion(4, ok, f"FpMaAdam {means[Variant.FP_MA_ADAM]:.3f} > FpMaGrid "
                            f"{means[Variant.FP_MA_GRID]:.3f} > FixedFP {means[Variant.FIXED_FP]:.3f}, "
                            f"gain {100 * g:.1f}% (>= 15%)")
    assert ok


# -- 5 ---------------------------------------------------------------------


def test_criterion_5_small_radius(baseline):
    setup = dataclasses.replace(BASELINE, array=ArrayConfig(4, 4, 0.04))
    small = monte_carlo(setup, [Variant.FIXED_FP, Variant.FP_MA_ADAM], TRIALS, 0, OPTIONS)
    g_small, g_base = gain(small), gain(baseline)
    ok = small.failure_count == 0 and g_small < g_base
    record_criterion(5, ok, f"gain at R=0.04 {100 * g_small:.1f}% < at R=0.5 {100 * g_base:.1f}%")
    assert ok


# -- 6 ---------------------------------------------------------------------


def test_criterion_6_dimension_ablation(baseline):
    gh = gain(baseline, Variant.HORIZONTAL_ONLY)
    gv = gain(baseline, Variant.VERTICAL_ONLY)
    ok = gh > gv
    record_criterion(6, ok, f"horizontal-only gain {100 * gh:.1f}% > vertical-only {100 * gv:.1f}%")
    assert ok


# -- 7 ---------------------------------------------------------------------


def test_criterion_7_sweeps(baseline):
    snr = monte_carlo(BASELINE, MAIN, TRIALS, 0, OPTIONS, sweep=("snr_db", [-10, -5, 5]))
    paths = monte_carlo(BASELINE, MAIN, TRIALS, 0, OPTIONS, sweep=("num_paths", [1, 10]))
    lines, ok = [], snr.failure_count == 0 and paths.failure_count == 0
    for v in MAIN:
        curve = [snr.get(v, -10).final_mean, snr.get(v, -5).final_mean,
                 baseline.get(v).final_mean, snr.get(v, 5).final_mean]
        rising = all(a < b for a, b in zip(curve, curve[1:]))
        more_paths = paths.get(v, 10).final_mean > paths.get(v, 1).final_mean
        ok = ok and rising and more_paths
        lines.append(f"{v.value}: SNR " + "<".join(f"{c:.2f}" for c in curve)
                     + f", L=1 {paths.get(v, 1).final_mean:.2f} vs L=10 {paths.get(v, 10).final_mean:.2f}")
    record_criterion(7, ok, "; ".join(lines))
    assert ok


# -- 8 ---------------------------------------------------------------------


def test_criterion_8_layer_spacing(baseline):
    half = monte_carlo(dataclasses.replace(BASELINE, layer_spacing=0.5),
                       [Variant.FIXED_FP, Variant.FP_MA_ADAM], TRIALS, 0, OPTIONS)
    g_half, g_base = gain(half), gain(baseline)
    ok = half.failure_count == 0 and g_half < g_base
    record_criterion(8, ok, f"gain from lambda/2 spacing {100 * g_half:.1f}% < from lambda spacing "
                            f"{100 * g_base:.1f}%")
    assert ok


# -- 9 ---------------------------------------------------------------------


def test_criterion_9_magnitudes_are_informational(baseline):
    # the published percentages are single-configuration outcomes with
    # unreported randomness; they are reported, not matched
    g = gain(baseline)
    ok = math.isfinite(g)
    record_criterion(9, ok, f"informational: baseline gain {100 * g:.1f}% (published 31%); "
                            "magnitudes are not asserted")
    assert ok


# -- 10 --------------------------------------------------------------------


def test_criterion_10_determinism(tmp_path):
    args = ["run", "--trials", "2", "--seed", "3", "--set", "solver.max_outer_iterations=5"]
    for name in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / name)]) == 0
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("trace.csv", "final.csv"))
    record_criterion(10, same, "two identical runs give byte-identical trace.csv and final.csv")
    assert same
