"""Request handlers shared by the HTTP application and the command line.

Each handler takes a validated settings model and returns a response model;
CSV rendering lives here too so both front ends emit identical bytes.
"""

import hashlib
import inspect
import json

import numpy as np

from .. import __version__
from ..engine import build_time_grid
from ..problems import (
    LinearDriverSpec,
    REGISTRY,
    brute_force_control_value,
    build_problem,
    heat_reference,
    linear_bsde_reference,
    uncertain_vol_reference,
)
from ..solver import compute_error_metric, convergence_study, solve_problem
from .models import (
    ConvergeResult,
    ConvergeRow,
    ConvergeSettings,
    OracleResult,
    OracleSettings,
    RunResult,
    SolveSettings,
    StepDiagnostic,
)


def config_hash(settings) -> str:
    """sha256 over the canonical JSON form of the settings, excluding fields
    that cannot change the numbers (worker count)."""
    payload = settings.model_dump()
    payload.pop("workers", None)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _factory_params(name: str, overrides: dict) -> dict:
    """Factory defaults for `name` merged with the request overrides; rejects
    override keys the factory does not accept."""
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}")
    factory = REGISTRY[name]
    sig = inspect.signature(factory)
    unknown = set(overrides) - set(sig.parameters)
    if unknown:
        raise KeyError(f"problem {name!r} does not accept overrides {sorted(unknown)}")
    params = {k: p.default for k, p in sig.parameters.items()}
    params.update(overrides)
    return params


def _build(name: str, overrides: dict):
    _factory_params(name, overrides)
    return build_problem(name, **overrides)


def run_solve(settings: SolveSettings) -> RunResult:
    problem = _build(settings.problem, settings.overrides)
    solution, paths = solve_problem(
        problem,
        n_steps=settings.n_steps,
        n_paths=settings.n_paths,
        seed=settings.seed,
        state_degree=settings.state_degree,
        control_degree=settings.control_degree,
        control_grid_size=settings.control_grid,
        mode=settings.mode,
        refit_sup=settings.refit_sup,
        truncate=settings.truncate,
        intensity_mass=settings.intensity_mass,
        workers=settings.workers,
    )
    steps = []
    for i in range(solution.grid.n_steps + 1):
        znorm = 0.0
        if i < solution.grid.n_steps:
            znorm = float(np.mean(np.linalg.norm(solution.z_path[:, i, :], axis=1)))
        steps.append(
            StepDiagnostic(
                time=float(solution.grid.times[i]),
                y_mean=float(solution.y_path[:, i].mean()),
                y_std=float(solution.y_path[:, i].std(ddof=1)),
                z_mean_norm=znorm,
            )
        )
    err = err_plus = err_minus = None
    if problem.reference is not None:
        report = compute_error_metric(problem.reference, solution, paths)
        err, err_plus, err_minus = report.total, report.err_plus, report.err_minus
    return RunResult(
        problem=settings.problem,
        y0=solution.y0,
        se=solution.y0_se,
        seed=settings.seed,
        n_paths=settings.n_paths,
        n_steps=settings.n_steps,
        mode=settings.mode,
        config_hash=config_hash(settings),
        version=__version__,
        steps=steps,
        error_metric=err,
        err_plus=err_plus,
        err_minus=err_minus,
    )


def run_convergence(settings: ConvergeSettings) -> ConvergeResult:
    problem = _build(settings.problem, settings.overrides)
    study = convergence_study(
        problem,
        settings.n_list,
        settings.n_paths,
        settings.seed,
        state_degree=settings.state_degree,
        control_degree=settings.control_degree,
        control_grid_size=settings.control_grid,
        mode=settings.mode,
        refit_sup=settings.refit_sup,
        truncate=settings.truncate,
        intensity_mass=settings.intensity_mass,
        workers=settings.workers,
    )
    rows = [
        ConvergeRow(n_steps=r.n_steps, modulus=r.modulus, y0=r.y0, se=r.se, error=r.error)
        for r in study.rows
    ]
    return ConvergeResult(
        problem=settings.problem,
        seed=settings.seed,
        n_paths=settings.n_paths,
        mode=settings.mode,
        config_hash=config_hash(settings),
        version=__version__,
        rows=rows,
        slope=study.slope,
        flag=study.flag,
    )


def run_oracle(settings: OracleSettings) -> OracleResult:
    name = settings.problem
    problem = _build(name, settings.overrides)
    params = _factory_params(name, settings.overrides)
    se = None
    if name == "heat":
        value, tol = heat_reference(
            0.0, problem.x0, problem.terminal, problem.horizon
        )
        method = "closed-form"
    elif name == "linear-bsde":
        spec = LinearDriverSpec(params["delta"], [params["alpha"]], params["gamma"])
        value, tol = linear_bsde_reference(
            spec,
            lambda xs: np.ones(xs.shape[0]),
            0.0,
            1.0,
            problem.x0,
            problem.horizon,
        )
        method = "closed-form"
    elif name == "manufactured-sine":
        value = float(
            np.asarray(problem.reference.value(0.0, problem.x0[None, :])).ravel()[0]
        )
        tol = 0.0
        method = "closed-form"
    elif name == "uncertain-vol":
        value, tol = uncertain_vol_reference(
            problem.terminal,
            problem.x0,
            0.0,
            problem.horizon,
            params["a_hi"],
        )
        method = "closed-form"
    elif name == "hjb-tiny":
        grid = build_time_grid(problem.horizon, settings.n_steps)
        bf = brute_force_control_value(
            problem,
            grid,
            problem.control_set.grid(),
            settings.n_inner,
            settings.seed,
        )
        value, se = bf.value, bf.se
        tol = 3.0 * bf.se
        method = "brute-force"
    else:
        raise KeyError(f"no oracle registered for problem {name!r}")
    return OracleResult(
        problem=name,
        seed=settings.seed,
        value=value,
        tolerance=tol,
        se=se,
        method=method,
        config_hash=config_hash(settings),
        version=__version__,
    )


# ---------------------------------------------------------------------------
# CSV rendering: UTF-8, "\n" line endings, "#"-prefixed metadata header.


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _meta(result) -> list[str]:
    return [
        f"# problem={result.problem}",
        f"# seed={getattr(result, 'seed', '')}" if hasattr(result, "seed") else None,
        f"# config={result.config_hash}",
        f"# version={result.version}",
    ]


def _render(result, header: list[str], data_rows: list[list]) -> str:
    lines = [m for m in _meta(result) if m is not None]
    lines.append(",".join(header))
    for row in data_rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def render_run_csv(result: RunResult) -> str:
    header = ["problem", "n_paths", "n_steps", "mode", "y0", "se",
              "error_metric", "err_plus", "err_minus"]
    rows = [[
        result.problem, result.n_paths, result.n_steps, result.mode,
        result.y0, result.se, result.error_metric, result.err_plus,
        result.err_minus,
    ]]
    body = _render(result, header, rows)
    step_lines = ["step_time,y_mean,y_std,z_mean_norm"]
    for s in result.steps:
        step_lines.append(
            ",".join(_fmt(v) for v in [s.time, s.y_mean, s.y_std, s.z_mean_norm])
        )
    return body + "\n".join(step_lines) + "\n"


def render_converge_csv(result: ConvergeResult) -> str:
    header = ["n_steps", "modulus", "y0", "se", "error", "slope"]
    rows = []
    for r in result.rows:
        rows.append([r.n_steps, r.modulus, r.y0, r.se, r.error, result.slope])
    out = _render(result, header, rows)
    if result.flag:
        out += f"# flag={result.flag}\n"
    return out


def render_oracle_csv(result: OracleResult) -> str:
    header = ["problem", "value", "tolerance", "se", "method"]
    rows = [[result.problem, result.value, result.tolerance, result.se, result.method]]
    return _render(result, header, rows)
