"""Command-line front end.

Thin client over the service handlers: parse flags (optionally layered over a
TOML config file), build the request model, run it in-process, and write CSV.

Exit codes: 0 success, 1 solver failure, 2 configuration error (bad flag
values, unparseable config file, unknown problem name).
"""

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from pydantic import ValidationError

from .engine import SimulationError
from .service import handlers
from .service.models import ConvergeSettings, OracleSettings, SolveSettings
from .solver import FixedPointError

OVERRIDE_FLAGS = ("delta", "alpha", "gamma", "x0", "horizon", "a_lo", "a_hi")


class ConfigError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser, oracle: bool = False):
    p.add_argument("--problem", help="problem name from the registry")
    p.add_argument("--seed", type=int, help="base seed for all random streams")
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    for name in OVERRIDE_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name,
                       help=f"problem parameter override: {name}")
    if oracle:
        p.add_argument("--n", type=int, dest="n_steps",
                       help="time steps for the brute-force enumeration")
        p.add_argument("--n-inner", type=int, help="inner Monte-Carlo sample size")
        return
    p.add_argument("--N", type=int, dest="n_paths", help="Monte-Carlo path count")
    p.add_argument("--n", type=int, dest="n_steps", help="time steps")
    p.add_argument("--basis-degree",
                   help="state polynomial degree, optionally 'p,q' with the control degree")
    p.add_argument("--control-grid", type=int, help="control grid size per dimension")
    p.add_argument("--lambda", type=float, dest="intensity_mass",
                   help="total jump intensity of the control randomization")
    p.add_argument("--mode", choices=["implicit", "explicit"], help="driver coupling")
    p.add_argument("--refit-sup", action="store_true", default=None,
                   help="refit the intermediate values before the maximization step")
    p.add_argument("--truncate", type=float, help="clamp regression targets to [-B, B]")
    p.add_argument("--workers", type=int, help="worker threads for path simulation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsdemc",
        description="Monte-Carlo solver for parabolic PDEs via BSDE representations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="solve a problem once and emit a CSV record")
    _add_common(run)
    conv = sub.add_parser("converge", help="rate table over a ladder of step counts")
    _add_common(conv)
    conv.add_argument("--n-list", help="comma-separated increasing step counts")
    orc = sub.add_parser("oracle", help="reference value (closed form or brute force)")
    _add_common(orc, oracle=True)
    return parser


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def _parse_basis_degree(text: str) -> tuple[int, int | None]:
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return int(parts[0]), None
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise ConfigError(f"--basis-degree expects 'p' or 'p,q', got {text!r}")


def _merge(args: argparse.Namespace) -> dict:
    """Config-file values first, then any flag that was actually given."""
    merged = _load_config(args.config)
    merged.setdefault("overrides", {})
    if not isinstance(merged["overrides"], dict):
        raise ConfigError("config key 'overrides' must be a table")
    for key, val in vars(args).items():
        if key in ("command", "config", "out") or val is None:
            continue
        if key in OVERRIDE_FLAGS:
            merged["overrides"][key] = val
        elif key == "basis_degree":
            p, q = _parse_basis_degree(str(val))
            merged["state_degree"] = p
            if q is not None:
                merged["control_degree"] = q
        elif key == "n_list":
            try:
                merged["n_list"] = [int(s) for s in str(val).split(",")]
            except ValueError as exc:
                raise ConfigError(f"--n-list expects comma-separated integers: {exc}") from exc
        else:
            merged[key] = val
    if "basis_degree" in merged and "state_degree" not in merged:
        p, q = _parse_basis_degree(str(merged.pop("basis_degree")))
        merged["state_degree"] = p
        if q is not None:
            merged["control_degree"] = q
    if merged.get("problem") is None:
        raise ConfigError("no problem given (use --problem or the config file)")
    return merged


def _build_settings(command: str, merged: dict):
    model = {"run": SolveSettings, "converge": ConvergeSettings, "oracle": OracleSettings}[command]
    allowed = set(model.model_fields)
    unknown = set(merged) - allowed
    if unknown:
        raise ConfigError(f"unknown configuration keys for {command}: {sorted(unknown)}")
    try:
        return model(**merged)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        merged = _merge(args)
        settings = _build_settings(args.command, merged)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            text = handlers.render_run_csv(handlers.run_solve(settings))
        elif args.command == "converge":
            text = handlers.render_converge_csv(handlers.run_convergence(settings))
        else:
            text = handlers.render_oracle_csv(handlers.run_oracle(settings))
    except KeyError as exc:
        print(f"configuration error: {exc.args[0]}", file=sys.stderr)
        return 2
    except (ValueError, SimulationError, FixedPointError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    _write(text, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
