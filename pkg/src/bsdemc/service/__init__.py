"""Service layer: request/response models, handlers, and the HTTP app."""

from .app import create_app
from .handlers import (
    config_hash,
    render_converge_csv,
    render_oracle_csv,
    render_run_csv,
    run_convergence,
    run_oracle,
    run_solve,
)
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
