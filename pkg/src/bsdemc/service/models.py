"""Request and response models for the solver service.

The same models back the HTTP endpoints and the command-line client, so a
request can be reconstructed exactly from the metadata embedded in any CSV
output.
"""

from typing import Literal

from pydantic import BaseModel, Field, field_validator


class SolveSettings(BaseModel):
    """One solver run: problem selection plus numerical configuration.

    `overrides` is passed through to the problem factory (for example
    `{"delta": 0.0, "gamma": 1.0}` for the linear-generator problem).
    """

    problem: str
    n_paths: int = Field(default=10_000, gt=0)
    n_steps: int = Field(default=20, gt=0)
    seed: int = Field(default=0, ge=0)
    state_degree: int = Field(default=3, ge=0)
    control_degree: int = Field(default=2, ge=0)
    control_grid: int = Field(default=17, gt=0)
    intensity_mass: float | None = Field(default=None, gt=0)
    mode: Literal["implicit", "explicit"] = "implicit"
    refit_sup: bool = False
    truncate: float | None = Field(default=None, gt=0)
    workers: int = Field(default=1, gt=0)
    overrides: dict[str, float] = Field(default_factory=dict)

    @field_validator("problem")
    @classmethod
    def _problem_nonempty(cls, v: str) -> str:
        if not v:
            raise ValueError("problem name must be nonempty")
        return v


class ConvergeSettings(SolveSettings):
    """A ladder of step counts solved under otherwise identical settings."""

    n_list: list[int] = Field(default=[8, 16, 32, 64], min_length=1)

    @field_validator("n_list")
    @classmethod
    def _increasing(cls, v: list[int]) -> list[int]:
        if any(n <= 0 for n in v):
            raise ValueError("step counts must be positive")
        if sorted(v) != v:
            raise ValueError("n_list must be increasing")
        return v


class OracleSettings(BaseModel):
    """Reference-value request: closed form where available, otherwise a
    brute-force control enumeration with the given inner sample size."""

    problem: str
    n_steps: int = Field(default=3, gt=0)
    n_inner: int = Field(default=100_000, gt=0)
    seed: int = Field(default=0, ge=0)
    overrides: dict[str, float] = Field(default_factory=dict)


class StepDiagnostic(BaseModel):
    time: float
    y_mean: float
    y_std: float
    z_mean_norm: float


class RunResult(BaseModel):
    problem: str
    y0: float
    se: float
    seed: int
    n_paths: int
    n_steps: int
    mode: str
    config_hash: str
    version: str
    steps: list[StepDiagnostic]
    error_metric: float | None = None
    err_plus: float | None = None
    err_minus: float | None = None


class ConvergeRow(BaseModel):
    n_steps: int
    modulus: float
    y0: float
    se: float
    error: float | None


class ConvergeResult(BaseModel):
    problem: str
    seed: int
    n_paths: int
    mode: str
    config_hash: str
    version: str
    rows: list[ConvergeRow]
    slope: float | None
    flag: str | None = None


class OracleResult(BaseModel):
    problem: str
    seed: int
    value: float
    tolerance: float
    se: float | None
    method: str
    config_hash: str
    version: str
