"""HTTP front end: thin routing over the shared request handlers."""

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..problems import REGISTRY
from ..solver import FixedPointError
from ..engine import SimulationError
from . import handlers
from .models import (
    ConvergeResult,
    ConvergeSettings,
    OracleResult,
    OracleSettings,
    RunResult,
    SolveSettings,
)


def create_app() -> FastAPI:
    app = FastAPI(title="bsdemc", version=__version__)

    def guarded(fn, settings):
        try:
            return fn(settings)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (ValueError, SimulationError, FixedPointError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/problems")
    def problems():
        return {"problems": sorted(REGISTRY)}

    @app.post("/run", response_model=RunResult)
    def run(settings: SolveSettings):
        return guarded(handlers.run_solve, settings)

    @app.post("/converge", response_model=ConvergeResult)
    def converge(settings: ConvergeSettings):
        return guarded(handlers.run_convergence, settings)

    @app.post("/oracle", response_model=OracleResult)
    def oracle(settings: OracleSettings):
        return guarded(handlers.run_oracle, settings)

    return app
