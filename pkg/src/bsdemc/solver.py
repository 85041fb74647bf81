"""Backward dynamic-programming passes.

Two schemes: the backward Euler scheme for semilinear problems (conditional
expectations realized as least-squares regressions on the state), and the
control-randomization scheme for HJB problems (regressions on (state, regime)
followed by a per-path maximization over the control variable).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    TimeGrid,
    PathBatch,
    IntensityMeasure,
    build_time_grid,
    euler_diffusion,
    euler_regime_switching,
    sample_brownian_increments,
    simulate_marked_poisson,
)
from .problems import HJBProblem, Reference, SemilinearProblem
from .regression import BasisSpec, FitFunction, MinNormSolver


class FixedPointError(RuntimeError):
    """Implicit step failed to converge within the iteration budget."""


def implicit_step_fixed_point(
    target,
    z,
    x,
    f,
    dt: float,
    a=None,
    tol: float = 1e-10,
    max_iter: int = 50,
    lipschitz: float | None = None,
):
    """Solve y = target + f(x[, a], y, z) * dt by fixed-point iteration.

    Vectorized over paths; starts from y0 = target.  Convergence is declared
    when one more application of the map would move the iterate by at most
    `tol` (so a y-independent driver converges in a single iteration).
    Returns (y, iterations).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lipschitz is not None and dt * lipschitz >= 1.0:
        warnings.warn(f"dt * C_f = {dt * lipschitz:.3g} >= 1; fixed point may diverge")
    target = np.asarray(target, dtype=float)

    def step(y):
        fy = f(x, y, z) if a is None else f(x, a, y, z)
        return target + np.asarray(fy, dtype=float) * dt

    y = target
    for k in range(1, max_iter + 1):
        y_next = step(y)
        if np.max(np.abs(step(y_next) - y_next)) <= tol:
            return y_next, k
        y = y_next
    raise FixedPointError(f"no convergence within {max_iter} iterations")


@dataclass
class BackwardSolution:
    """Output of a backward pass.

    `y_fits[i]` for i < n is the conditional-expectation fit produced at grid
    time t_i (of Y_{i+1}, or of the explicit-scheme target); `y_fits[n]` fits
    the terminal values.  `y_path` / `z_path` hold the realized per-path
    values; `controls` the feedback controls chosen at each step (HJB only).
    """

    grid: TimeGrid
    mode: str
    y0: float
    y0_se: float
    y0_regression: float
    y_path: np.ndarray
    z_path: np.ndarray
    y_fits: list
    z_fits: list
    controls: np.ndarray | None = None
    fp_iterations: list = field(default_factory=list)


def _clamp(values, bound):
    if bound is None:
        return values
    return np.clip(values, -bound, bound)


def _se_estimate(pathwise_values):
    """Standard error of Y_0 from the realized pathwise objective
    h(X_T) + sum_i f(...) dt_i (the regression pipeline averages it)."""
    n_paths = pathwise_values.shape[0]
    return float(np.std(pathwise_values, ddof=1) / np.sqrt(n_paths))


def backward_semilinear_solve(
    problem: SemilinearProblem,
    grid: TimeGrid,
    paths: PathBatch,
    basis: BasisSpec | None = None,
    mode: str = "implicit",
    fp_tol: float = 1e-10,
    fp_max_iter: int = 50,
    truncate: float | None = None,
) -> BackwardSolution:
    """Backward Euler scheme with least-squares regressions on the state.

    Z_{t_i} regresses the centered target (Y_{i+1} - E[Y_{i+1}|X_i]) dW_i / dt_i
    on the basis (the centering is a variance reduction only); the Y-step is
    either implicit (pathwise fixed point on the regression estimate) or
    explicit (driver evaluated at Y_{t_{i+1}} inside the regression target).
    """
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"unknown mode {mode!r}")
    if basis is None:
        basis = BasisSpec.polynomial(problem.dim, 3)
    x_all = paths.states
    dw = paths.increments.increments
    n = grid.n_steps
    n_paths = x_all.shape[0]
    dim = x_all.shape[2]
    dts = grid.steps

    y_path = np.empty((n_paths, n + 1))
    z_path = np.zeros((n_paths, n, dim))
    y_fits: list = [None] * (n + 1)
    z_fits: list = [None] * n
    fp_iters = []

    y = problem.terminal(x_all[:, n, :])
    y_path[:, n] = y
    pathwise = y.copy()
    term_solver = MinNormSolver(basis.features(x_all[:, n, :]))
    y_fits[n] = FitFunction(term_solver.solve(y), basis, term_solver.rank, term_solver.truncated)

    for i in range(n - 1, -1, -1):
        xi = x_all[:, i, :]
        phi = basis.features(xi)
        solver = MinNormSolver(phi)
        yc = solver.solve(_clamp(y, truncate))
        estimate = phi @ yc
        # same conditional expectation as regressing y dW / dt directly, but
        # the centered target has O(1) variance instead of O(1/dt)
        zc = solver.solve((y - estimate)[:, None] * dw[:, i, :] / dts[i])
        z = phi @ zc
        z_path[:, i, :] = z
        z_fits[i] = tuple(
            FitFunction(zc[:, k], basis, solver.rank, solver.truncated) for k in range(dim)
        )
        if mode == "implicit":
            try:
                y, iters = implicit_step_fixed_point(
                    estimate, z, xi, problem.driver, dts[i],
                    tol=fp_tol, max_iter=fp_max_iter, lipschitz=problem.lipschitz,
                )
            except FixedPointError as exc:
                raise FixedPointError(f"step {i} (t={grid.times[i]:.6g}): {exc}") from exc
            fp_iters.append(iters)
            pathwise += problem.driver(xi, y, z) * dts[i]
        else:
            fval = problem.driver(xi, y, z)
            target = y + fval * dts[i]
            yc = solver.solve(_clamp(target, truncate))
            y = phi @ yc
            fp_iters.append(0)
            pathwise += fval * dts[i]
        y_fits[i] = FitFunction(yc, basis, solver.rank, solver.truncated)
        y_path[:, i] = y

    y0 = float(y_path[:, 0].mean())
    return BackwardSolution(
        grid=grid,
        mode=mode,
        y0=y0,
        y0_se=_se_estimate(pathwise),
        y0_regression=float(y_path[0, 0]),
        y_path=y_path,
        z_path=z_path,
        y_fits=y_fits,
        z_fits=z_fits,
        fp_iterations=fp_iters[::-1],
    )


def hjb_backward_solve(
    problem: HJBProblem,
    grid: TimeGrid,
    paths: PathBatch,
    basis: BasisSpec | None = None,
    control_grid: np.ndarray | None = None,
    mode: str = "implicit",
    refit_sup: bool = False,
    control_grid_size: int = 17,
    fp_tol: float = 1e-10,
    fp_max_iter: int = 50,
    truncate: float | None = None,
) -> BackwardSolution:
    """Control-randomization scheme on regime-switching paths.

    Per step, in order: (a) regression of Y_{i+1} on (x, a) and the centered Z
    regression (Y_{i+1} - E[Y_{i+1}|x, a]) dW_i / dt_i; (b) the intermediate
    value from the Y_{i+1} regression estimate plus the driver term (pathwise fixed point in implicit mode); (c) pathwise
    maximization of the fitted intermediate value over the control grid, with
    the regime argument forced to each candidate control.  The jump component
    of the underlying constrained BSDE is not computed.
    """
    if paths.regimes is None:
        raise ValueError("hjb_backward_solve needs regime-annotated paths")
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"unknown mode {mode!r}")
    if basis is None:
        basis = BasisSpec.polynomial(problem.dim, 3, control=problem.control_set)
    if control_grid is None:
        control_grid = problem.control_set.grid(control_grid_size)
    control_grid = np.atleast_2d(np.asarray(control_grid, dtype=float))
    if control_grid.shape[0] == 0:
        raise ValueError("control grid must be nonempty")

    x_all = paths.states
    regimes = paths.regimes
    dw = paths.increments.increments
    n = grid.n_steps
    n_paths, _, dim = x_all.shape
    dts = grid.steps
    n_ctrl = control_grid.shape[0]

    y_path = np.empty((n_paths, n + 1))
    z_path = np.zeros((n_paths, n, dim))
    controls = np.empty((n_paths, n, control_grid.shape[1]))
    y_fits: list = [None] * (n + 1)
    z_fits: list = [None] * n
    fp_iters = []

    y = problem.terminal(x_all[:, n, :])
    y_path[:, n] = y
    pathwise = y.copy()
    term_solver = MinNormSolver(basis.features(x_all[:, n, :], regimes[:, n, :]))
    y_fits[n] = FitFunction(term_solver.solve(y), basis, term_solver.rank, term_solver.truncated)

    def fixed_point(step_i, estimate, xi, a, z):
        try:
            return implicit_step_fixed_point(
                estimate, z, xi, problem.driver, dts[step_i], a=a,
                tol=fp_tol, max_iter=fp_max_iter, lipschitz=problem.lipschitz,
            )
        except FixedPointError as exc:
            raise FixedPointError(
                f"step {step_i} (t={grid.times[step_i]:.6g}): {exc}"
            ) from exc

    for i in range(n - 1, -1, -1):
        xi = x_all[:, i, :]
        ai = regimes[:, i, :]
        phi = basis.features(xi, ai)
        solver = MinNormSolver(phi)
        yc = solver.solve(_clamp(y, truncate))
        estimate = phi @ yc
        # same conditional expectation as regressing y dW / dt directly, but
        # the centered target has O(1) variance instead of O(1/dt)
        zc = solver.solve((y - estimate)[:, None] * dw[:, i, :] / dts[i])
        z_path[:, i, :] = phi @ zc
        z_fits[i] = tuple(
            FitFunction(zc[:, k], basis, solver.rank, solver.truncated) for k in range(dim)
        )

        if mode == "implicit":
            y_mid, iters = fixed_point(i, estimate, xi, ai, phi @ zc)
            fp_iters.append(iters)
        else:
            z = phi @ zc
            target = y + problem.driver(xi, ai, y, z) * dts[i]
            yc = solver.solve(_clamp(target, truncate))
            y_mid = phi @ yc
            fp_iters.append(0)
        y_fits[i] = FitFunction(yc, basis, solver.rank, solver.truncated)

        if refit_sup:
            yc_sup = solver.solve(y_mid)

        cand = np.empty((n_paths, n_ctrl))
        for g in range(n_ctrl):
            a_g = np.broadcast_to(control_grid[g], (n_paths, control_grid.shape[1]))
            feats = basis.features(xi, a_g)
            if refit_sup:
                cand[:, g] = feats @ yc_sup
            elif mode == "implicit":
                cand[:, g], _ = fixed_point(i, feats @ yc, xi, a_g, feats @ zc)
            else:
                cand[:, g] = feats @ yc
        best = np.argmax(cand, axis=1)  # first maximum = lowest grid index
        y = cand[np.arange(n_paths), best]
        controls[:, i, :] = control_grid[best]
        y_path[:, i] = y
        pathwise += problem.driver(xi, controls[:, i, :], y, z_path[:, i, :]) * dts[i]

    y0 = float(y_path[:, 0].mean())
    return BackwardSolution(
        grid=grid,
        mode=mode,
        y0=y0,
        y0_se=_se_estimate(pathwise),
        y0_regression=float(y_path[0, 0]),
        y_path=y_path,
        z_path=z_path,
        y_fits=y_fits,
        z_fits=z_fits,
        controls=controls,
        fp_iterations=fp_iters[::-1],
    )


@dataclass(frozen=True)
class ErrorReport:
    """Squared discrete-time approximation error and signed variants."""

    total: float
    y_component: float
    z_component: float
    err_plus: float
    err_minus: float
    per_step_y: np.ndarray


def compute_error_metric(
    reference: Reference, solution: BackwardSolution, paths: PathBatch
) -> ErrorReport:
    """max_i E|v(t_i, X_i) - Y_i|^2 plus the dt-weighted Z error (left-endpoint
    rule; omitted when the reference has no Z), reported as the square root."""
    grid = solution.grid
    n = grid.n_steps
    x_all = paths.states
    per_step = np.empty(n + 1)
    plus = np.empty(n + 1)
    minus = np.empty(n + 1)
    for i in range(n + 1):
        diff = np.asarray(reference.value(grid.times[i], x_all[:, i, :]), dtype=float)
        diff = diff - solution.y_path[:, i]
        per_step[i] = np.mean(diff**2)
        plus[i] = np.sqrt(np.mean(np.maximum(diff, 0.0) ** 2))
        minus[i] = np.sqrt(np.mean(np.maximum(-diff, 0.0) ** 2))
    y_comp = float(per_step.max())
    z_comp = 0.0
    if reference.z is not None:
        dts = grid.steps
        for i in range(n):
            zdiff = (
                np.asarray(reference.z(grid.times[i], x_all[:, i, :]), dtype=float)
                - solution.z_path[:, i, :]
            )
            z_comp += dts[i] * float(np.mean(np.sum(zdiff**2, axis=1)))
    return ErrorReport(
        total=float(np.sqrt(y_comp + z_comp)),
        y_component=y_comp,
        z_component=float(z_comp),
        err_plus=float(plus.max()),
        err_minus=float(minus.max()),
        per_step_y=per_step,
    )


def solve_problem(
    problem,
    n_steps: int,
    n_paths: int,
    seed: int,
    basis: BasisSpec | None = None,
    state_degree: int = 3,
    control_degree: int = 2,
    control_grid_size: int = 17,
    mode: str = "implicit",
    refit_sup: bool = False,
    truncate: float | None = None,
    intensity_mass: float | None = None,
    workers: int = 1,
):
    """Simulate forward paths for `problem` and run the matching backward pass.

    Returns (solution, paths).
    """
    grid = build_time_grid(problem.horizon, n_steps)
    if isinstance(problem, HJBProblem):
        if basis is None:
            basis = BasisSpec.polynomial(
                problem.dim, state_degree, control=problem.control_set,
                control_degree=control_degree,
            )
        lam = problem.intensity_mass if intensity_mass is None else intensity_mass
        intensity = IntensityMeasure(problem.control_set, lam)
        inc = sample_brownian_increments(grid, problem.dim, n_paths, seed, workers=workers)
        jumps = simulate_marked_poisson(intensity, problem.horizon, n_paths, seed, workers=workers)
        paths = euler_regime_switching(
            problem.drift, problem.diffusion, grid, inc, jumps, problem.x0
        )
        solution = hjb_backward_solve(
            problem, grid, paths, basis=basis, mode=mode, refit_sup=refit_sup,
            control_grid_size=control_grid_size, truncate=truncate,
        )
    else:
        if basis is None:
            basis = BasisSpec.polynomial(problem.dim, state_degree)
        inc = sample_brownian_increments(grid, problem.dim, n_paths, seed, workers=workers)
        paths = euler_diffusion(problem.drift, problem.diffusion, grid, inc, problem.x0)
        solution = backward_semilinear_solve(
            problem, grid, paths, basis=basis, mode=mode, truncate=truncate
        )
    return solution, paths


@dataclass(frozen=True)
class StudyRow:
    n_steps: int
    modulus: float
    y0: float
    se: float
    error: float | None


@dataclass(frozen=True)
class StudyResult:
    rows: list
    slope: float | None
    flag: str | None = None


def convergence_study(
    problem,
    n_list,
    n_paths: int,
    seed: int,
    solve_fn=None,
    **solve_kwargs,
) -> StudyResult:
    """Y_0 and error-metric table over a ladder of step counts, with the
    least-squares slope of log error vs log modulus.

    `solve_fn(problem, n_steps, n_paths, seed) -> (solution, paths)` may
    replace the built-in solver.  The slope is flagged (None) when fewer than
    two usable positive errors exist.
    """
    n_list = list(n_list)
    if sorted(n_list) != n_list:
        raise ValueError("n_list must be increasing")
    rows = []
    for n in n_list:
        if solve_fn is not None:
            solution, paths = solve_fn(problem, n, n_paths, seed)
        else:
            solution, paths = solve_problem(problem, n, n_paths, seed, **solve_kwargs)
        err = None
        if problem.reference is not None:
            err = compute_error_metric(problem.reference, solution, paths).total
        rows.append(
            StudyRow(n, solution.grid.modulus, solution.y0, solution.y0_se, err)
        )
    usable = [(r.modulus, r.error) for r in rows if r.error is not None and r.error > 0]
    if len(usable) < 2:
        flag = "slope undefined: fewer than two positive error values"
        return StudyResult(rows, None, flag)
    logm = np.log([u[0] for u in usable])
    loge = np.log([u[1] for u in usable])
    slope = float(np.polyfit(logm, loge, 1)[0])
    return StudyResult(rows, slope)
