"""Acceptance suite: every release gate in one file, one printed verdict per
criterion.  Budgets are desk scale; the whole file runs in a few minutes."""

import time

import numpy as np
import pytest

from bsdemc import (
    BasisSpec,
    argmax_over_control,
    brute_force_control_value,
    build_problem,
    build_time_grid,
    convergence_study,
    fit_least_squares,
    solve_problem,
)
from bsdemc.controls import Box, FiniteSet
from bsdemc.problems import HJBProblem, SemilinearProblem
from bsdemc.regression import FitFunction
from bsdemc.service.handlers import render_run_csv, run_solve
from bsdemc.service.models import SolveSettings


def verdict(tag: str, ok: bool, detail: str):
    print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{tag} failed: {detail}"


def test_criterion_1_heat_point_estimate():
    t0 = time.time()
    solution, _ = solve_problem(build_problem("heat"), 20, 100_000, seed=7, workers=1)
    elapsed = time.time() - t0
    ok = 0.97 <= solution.y0 <= 1.03 and elapsed < 10.0
    verdict(
        "criterion 1: heat Y0",
        ok,
        f"Y0={solution.y0:.5f} (target [0.97, 1.03]), {elapsed:.1f}s (< 10s)",
    )


def test_criterion_2_linear_bsde_oracle():
    problem = build_problem("linear-bsde")  # delta=1, gamma=0, h == 1
    solution, _ = solve_problem(problem, 64, 100_000, seed=7)
    ref = float(problem.reference.value(0.0, np.zeros((1, 1)))[0])  # e
    budget = 3.0 * solution.y0_se + 0.02 * ref
    ok = abs(solution.y0 - ref) <= budget
    verdict(
        "criterion 2: linear BSDE vs discounting formula",
        ok,
        f"Y0={solution.y0:.5f} vs e={ref:.5f}, |diff|={abs(solution.y0 - ref):.5f} "
        f"<= 3*SE + 2% = {budget:.5f}",
    )


def test_criterion_3_semilinear_rate():
    t0 = time.time()
    result = convergence_study(
        build_problem("manufactured-sine"), [8, 16, 32, 64], 200_000, seed=42,
        state_degree=5,
    )
    elapsed = time.time() - t0
    ok = result.slope is not None and 0.35 <= result.slope <= 0.65 and elapsed < 120.0
    rows = ", ".join(f"n={r.n_steps}: {r.error:.4f}" for r in result.rows)
    verdict(
        "criterion 3: rate of the discretization error",
        ok,
        f"slope={result.slope:.3f} (target [0.35, 0.65]), {elapsed:.0f}s (< 120s); {rows}",
    )


def test_criterion_4_singleton_reduction_bitwise():
    a0 = 0.8
    hjb = HJBProblem(
        dim=1,
        drift=lambda x, a: 0.05 * x,
        diffusion=lambda x, a: a[:, 0][:, None, None],
        driver=lambda x, a, y, z: 0.1 * y + 0.2 * z[:, 0],
        terminal=lambda x: x[:, 0] ** 2,
        control_set=FiniteSet([a0]),
        horizon=1.0,
        x0=[0.3],
        intensity_mass=2.0,
        lipschitz=0.3,
        name="singleton",
    )
    sol_h, _ = solve_problem(hjb, 12, 20_000, seed=7)
    sol_s, _ = solve_problem(hjb.frozen(np.array([a0])), 12, 20_000, seed=7)
    ok = (
        sol_h.y0 == sol_s.y0
        and np.array_equal(sol_h.y_path, sol_s.y_path)
        and np.array_equal(sol_h.z_path, sol_s.z_path)
    )
    verdict(
        "criterion 4: singleton control set reduces bitwise",
        ok,
        f"Y0 hjb={sol_h.y0!r} vs semilinear={sol_s.y0!r}, paths equal={ok}",
    )


def test_criterion_5_g_heat():
    t0 = time.time()
    problem = build_problem("uncertain-vol")  # A=[0.5,1.0], h=x^2, exact 1.0
    solution, _ = solve_problem(
        problem, 20, 100_000, seed=7,
        state_degree=3, control_degree=2, control_grid_size=17, intensity_mass=2.0,
    )
    elapsed = time.time() - t0
    ok = 0.93 <= solution.y0 <= 1.05 and elapsed < 120.0
    verdict(
        "criterion 5: uncertain-volatility value",
        ok,
        f"Y0={solution.y0:.5f} (target [0.93, 1.05], exact 1.0), {elapsed:.0f}s (< 120s)",
    )


def test_criterion_6_brute_force_agreement():
    problem = build_problem("hjb-tiny")
    solution, _ = solve_problem(problem, 3, 100_000, seed=42)
    grid = build_time_grid(problem.horizon, 3)  # 2^3 = 8 control sequences
    oracle = brute_force_control_value(
        problem, grid, problem.control_set.grid(), 100_000, seed=42
    )
    combined = float(np.hypot(solution.y0_se, oracle.se))
    ok = abs(solution.y0 - oracle.value) <= 3.0 * combined
    verdict(
        "criterion 6: scheme vs enumeration oracle",
        ok,
        f"scheme Y0={solution.y0:.5f} (SE {solution.y0_se:.5f}) vs "
        f"oracle {oracle.value:.5f} (SE {oracle.se:.5f}), "
        f"|diff|={abs(solution.y0 - oracle.value):.5f} <= {3 * combined:.5f}",
    )


def _comparison_pair(rng):
    c = rng.uniform(0.5, 2.0)
    s = rng.uniform(0.2, 1.0)
    a = rng.uniform(-0.5, 0.5)
    off_h = rng.uniform(0.0, 1.0)
    off_f = rng.uniform(0.0, 0.5)

    def make(h_off, f_off):
        return SemilinearProblem(
            dim=1,
            drift=lambda x: np.zeros_like(x),
            diffusion=lambda x: s * np.ones((x.shape[0], 1, 1)),
            driver=lambda x, y, z, f_off=f_off: a * np.tanh(x[:, 0]) + f_off,
            terminal=lambda x, h_off=h_off: np.sin(c * x[:, 0]) + h_off,
            horizon=1.0,
            x0=[0.0],
            lipschitz=abs(a),
            name="comparison-pair",
        )

    return make(0.0, 0.0), make(off_h, off_f)


def test_criterion_7_comparison_monotonicity():
    rng = np.random.default_rng(7)
    worst = -np.inf
    failures = []
    for k in range(20):
        lo, hi = _comparison_pair(rng)
        sol_lo, _ = solve_problem(lo, 8, 20_000, seed=100 + k)
        sol_hi, _ = solve_problem(hi, 8, 20_000, seed=100 + k)
        combined = float(np.hypot(sol_lo.y0_se, sol_hi.y0_se))
        margin = sol_hi.y0 + 3.0 * combined - sol_lo.y0
        worst = max(worst, sol_lo.y0 - sol_hi.y0)
        if margin < 0:
            failures.append(k)
    ok = not failures
    verdict(
        "criterion 7: comparison monotonicity over 20 pairs",
        ok,
        f"failures={failures or 'none'}, worst Y0_lo - Y0_hi = {worst:.5f}",
    )


def test_criterion_8_regression_oracle_suite():
    rng = np.random.default_rng(2)
    worst_rel = 0.0
    for trial in range(50):
        dim = int(rng.integers(1, 3))
        degree = int(rng.integers(1, 5))
        rows = int(rng.integers(4, 40))
        basis = BasisSpec.polynomial(dim, degree)
        x = rng.standard_normal((rows, dim))
        if trial % 3 == 0 and rows > 6:
            x[rows // 2:] = x[: rows - rows // 2]
        targets = rng.standard_normal(rows)
        fit = fit_least_squares(x, targets, basis)
        oracle = np.linalg.pinv(basis.features(x), rcond=1e-10) @ targets
        rel = np.linalg.norm(fit.coefficients - oracle) / max(np.linalg.norm(oracle), 1.0)
        worst_rel = max(worst_rel, rel)
    min_norm_ok = worst_rel < 1e-8

    basis = BasisSpec.polynomial(1, 3, control=Box([0.0], [1.0]), control_degree=2)
    grid = Box([0.0], [1.0]).grid(17)
    argmax_exact = True
    for _ in range(100):
        fit = FitFunction(rng.standard_normal(basis.size), basis, basis.size, 0)
        x = rng.standard_normal(1)
        a_star, val = argmax_over_control(fit, x, grid)
        vals = basis.features(np.repeat(x[None, :], 17, axis=0), grid) @ fit.coefficients
        k = int(np.argmax(vals))
        argmax_exact &= val == vals[k] and a_star[0] == grid[k, 0]
    ok = min_norm_ok and argmax_exact
    verdict(
        "criterion 8: regression oracles",
        ok,
        f"worst min-norm rel err {worst_rel:.2e} (< 1e-8) on 50 designs; "
        f"argmax exact on 100 fits: {argmax_exact}",
    )


def test_criterion_9_byte_identical_csv():
    def render(workers):
        settings = SolveSettings(
            problem="heat", n_paths=100_000, n_steps=20, seed=7, workers=workers
        )
        return render_run_csv(run_solve(settings))

    first = render(1)
    repeat = render(1)
    parallel = render(4)
    ok = (
        first.encode("utf-8") == repeat.encode("utf-8")
        and first.encode("utf-8") == parallel.encode("utf-8")
    )
    verdict(
        "criterion 9: deterministic CSV across repeats and worker counts",
        ok,
        f"repeat identical={first == repeat}, workers 1 vs 4 identical={first == parallel}",
    )
