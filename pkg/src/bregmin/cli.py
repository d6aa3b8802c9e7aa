"""Experiment runner: instance generation, solves, certificates, CSV traces.

Subcommands:
  bregmin run     --config cfg.json [flag overrides]   run one experiment
  bregmin compare --config-a a.json --config-b b.json  side-by-side models
  bregmin check   --config cfg.json                    certificates only

Exit codes: 0 success, 1 solver failure, 2 configuration error,
3 certificate failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import problems, solver
from .models import ModelProblem, map_residual_check
from .subsolve import PdhgConfig, Reg

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "parse_config",
    "config_to_dict",
    "run_experiment",
    "compare_models",
    "main",
]

PROBLEMS = ("phase_retrieval_m1", "phase_retrieval_m2", "robust_pr", "poisson")
REGS = ("none", "l1", "l2")

# scaled MAP violations beyond this fail the certificate gate
MAP_TOLERANCE = 1e-8

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_CERTIFICATE_FAILURE = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    reg: str = "none"
    lam: float = 0.1
    m: int = 50
    n: int = 10
    epsilon: float = 1e-8
    noise: float = 0.0
    seed: int = 0
    tau_fraction: float = 0.99
    max_iters: int = 1000
    move_tol: float = 1e-9
    backtracking: bool = False
    nu: float = 2.0
    L_init: Optional[float] = None
    inner_tol: float = 1e-9
    inner_max_iters: int = 2000
    record_time: bool = True
    store_iterates: bool = True
    output: Optional[str] = None
    emit_certificates: bool = False
    certificate_slack: Optional[float] = None
    map_samples: int = 10000
    map_radius: float = 5.0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(
                f"problem: unknown value {self.problem!r}, expected one of {PROBLEMS}"
            )
        if self.reg not in REGS:
            raise ConfigError(f"reg: unknown value {self.reg!r}, expected one of {REGS}")
        for fieldname in ("m", "n", "max_iters", "inner_max_iters", "map_samples"):
            if getattr(self, fieldname) < 0 or (
                fieldname in ("m", "n", "inner_max_iters") and getattr(self, fieldname) < 1
            ):
                raise ConfigError(f"{fieldname}: must be positive")
        if self.lam < 0.0:
            raise ConfigError("lambda: must be nonnegative")
        if not self.epsilon > 0.0:
            raise ConfigError("epsilon: must be positive")

    def output_path(self) -> str:
        if self.output is not None:
            return self.output
        return f"{self.problem}_seed{self.seed}.csv"


# JSON key -> dataclass field
_KEY_TO_FIELD = {f.name: f.name for f in dataclasses.fields(ExperimentConfig)}
_KEY_TO_FIELD["lambda"] = "lam"
del _KEY_TO_FIELD["lam"]


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["lambda"] = doc.pop("lam")
    return {k: v for k, v in doc.items() if v is not None}


def parse_config(path: Optional[str] = None, overrides: Optional[dict] = None
                 ) -> ExperimentConfig:
    """Build a validated config from a JSON document plus flag overrides.

    Overrides win over file values; unknown keys are rejected with the
    offending field named.
    """
    merged: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        for key, value in doc.items():
            if key not in _KEY_TO_FIELD:
                raise ConfigError(f"{key}: unknown configuration key")
            merged[_KEY_TO_FIELD[key]] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        field = _KEY_TO_FIELD.get(key, key)
        if field not in {f.name for f in dataclasses.fields(ExperimentConfig)}:
            raise ConfigError(f"{key}: unknown configuration key")
        merged[field] = value
    if "problem" not in merged:
        raise ConfigError("problem: required key missing")
    try:
        cfg = ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _build(cfg: ExperimentConfig):
    """Instance, model problem, MAP constant, and starting point for a config."""
    reg = Reg(cfg.reg)
    lam = cfg.lam if reg is not Reg.NONE else 0.0
    if cfg.problem == "poisson":
        inst = problems.gen_poisson(cfg.seed, cfg.m, cfg.n, epsilon=cfg.epsilon,
                                    reg=reg, lam=lam, noise=cfg.noise)
        p = problems.model_problem_poisson(inst)
        x0 = np.maximum(np.ones(cfg.n), cfg.epsilon)
    else:
        inst = problems.gen_phase_retrieval(cfg.seed, cfg.m, cfg.n, reg=reg,
                                            lam=lam, noise=cfg.noise)
        factory = {
            "phase_retrieval_m1": problems.model_problem_m1,
            "phase_retrieval_m2": problems.model_problem_m2,
            "robust_pr": problems.model_problem_robust,
        }[cfg.problem]
        p = factory(inst)
        x0 = np.random.default_rng([cfg.seed, 1]).standard_normal(cfg.n)
    return inst, p, x0


def _solver_config(cfg: ExperimentConfig) -> solver.SolverConfig:
    return solver.SolverConfig(
        tau_fraction=cfg.tau_fraction,
        max_iters=cfg.max_iters,
        move_tol=cfg.move_tol,
        backtracking=cfg.backtracking,
        nu=cfg.nu,
        L_init=cfg.L_init,
        seed=cfg.seed,
        inner=PdhgConfig(tol=cfg.inner_tol, max_iters=cfg.inner_max_iters),
        store_iterates=cfg.store_iterates,
        record_time=cfg.record_time,
    )


def _certificates(cfg: ExperimentConfig, p: ModelProblem,
                  trace: solver.IterateTrace):
    """Run the descent and model-error certificates; returns (lines, passed)."""
    report = solver.descent_certificate(p, trace, cfg.certificate_slack)
    map_report = map_residual_check(p, cfg.map_samples, cfg.map_radius, cfg.seed)
    map_ok = (map_report.worst_upper_violation <= MAP_TOLERANCE
              and map_report.worst_lower_violation <= MAP_TOLERANCE)
    lines = []
    for name, ok, margin in report.as_items():
        lines.append(f"# certificates: {name}={'pass' if ok else 'fail'} "
                     f"margin={margin:.17g}")
    lines.append(f"# certificates: slack={report.slack:.17g}")
    lines.append(
        f"# certificates: map_bound={'pass' if map_ok else 'fail'} "
        f"upper_violation={map_report.worst_upper_violation:.17g} "
        f"lower_violation={map_report.worst_lower_violation:.17g} "
        f"samples={map_report.samples}"
    )
    return lines, report.passed and map_ok, report, map_report


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(cfg: ExperimentConfig, check_only: bool = False) -> int:
    """Generate, solve, certify, and write the trace CSV.

    check_only skips the CSV and forces the certificate gate (used by the
    check subcommand).
    """
    print(f"effective config: {json.dumps(config_to_dict(cfg), sort_keys=True)}",
          file=sys.stderr)
    inst, p, x0 = _build(cfg)
    print(f"instance {problems.instance_digest(inst)} "
          f"L_upper={p.map_upper:.17g}", file=sys.stderr)
    try:
        trace = solver.run(p, _solver_config(cfg), x0)
    except solver.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    except solver.BacktrackError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE

    status = EXIT_OK
    trailer = ""
    if cfg.emit_certificates or check_only:
        if len(trace) < 2:
            lines, passed = ["# certificates: skipped=trace_too_short"], True
        else:
            lines, passed, report, map_report = _certificates(cfg, p, trace)
            if not passed:
                print(
                    "certificate failure: worst margins "
                    f"function={report.worst_function_margin:.3e} "
                    f"lyapunov={report.worst_lyapunov_margin:.3e} "
                    f"complexity={report.complexity_margin:.3e} "
                    f"map_upper={map_report.worst_upper_violation:.3e} "
                    f"map_lower={map_report.worst_lower_violation:.3e}",
                    file=sys.stderr,
                )
                status = EXIT_CERTIFICATE_FAILURE
        trailer = "\n".join(lines) + "\n"
        for line in lines:
            print(line, file=sys.stderr)

    if not check_only:
        _atomic_write(cfg.output_path(), solver.trace_to_csv(trace) + trailer)
        print(f"wrote {cfg.output_path()} ({len(trace)} rows)", file=sys.stderr)
    return status


def compare_models(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig,
                   output: Optional[str] = None) -> int:
    """Run two configs differing only in the model choice and summarize.

    Emits a side-by-side CSV of objective and Lyapunov values per iteration
    (up to the shorter trace) and names the model reaching the lower final
    objective; ties are declared below a 1e-12 relative gap.  Reported, not
    asserted: no pass/fail semantics beyond the usual failure exits.
    """
    allowed = {"phase_retrieval_m1", "phase_retrieval_m2"}
    if {cfg_a.problem, cfg_b.problem} != allowed:
        print("compare expects one phase_retrieval_m1 and one phase_retrieval_m2 "
              "config", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    skip = {"problem", "output"}
    da, db = config_to_dict(cfg_a), config_to_dict(cfg_b)
    diff = [k for k in (set(da) | set(db)) - skip if da.get(k) != db.get(k)]
    if diff:
        print(f"configs differ beyond the model choice: {sorted(diff)}",
              file=sys.stderr)
        return EXIT_CONFIG_ERROR

    results = {}
    for cfg in (cfg_a, cfg_b):
        inst, p, x0 = _build(cfg)
        digest = problems.instance_digest(inst)
        try:
            trace = solver.run(p, _solver_config(cfg), x0)
        except (solver.SolverError, solver.BacktrackError) as exc:
            print(f"solver failure on {cfg.problem}: {exc}", file=sys.stderr)
            return EXIT_SOLVER_FAILURE
        if cfg.emit_certificates:
            _, passed, _, _ = _certificates(cfg, p, trace)
            if not passed:
                print(f"certificate failure on {cfg.problem}", file=sys.stderr)
                return EXIT_CERTIFICATE_FAILURE
        results[cfg.problem] = (digest, trace)

    (dg_a, tr_a) = results[cfg_a.problem]
    (dg_b, tr_b) = results[cfg_b.problem]
    rows = ["iter,f_a,f_b,lyapunov_a,lyapunov_b,time_a,time_b",]
    for i in range(min(len(tr_a), len(tr_b))):
        rows.append(
            f"{i},"
            f"{tr_a.f[i]:.17g},{tr_b.f[i]:.17g},"
            f"{tr_a.lyapunov[i]:.17g},{tr_b.lyapunov[i]:.17g},"
            f"{tr_a.time_s[i]:.17g},{tr_b.time_s[i]:.17g}"
        )
    rows.append(f"# instance_a: {dg_a}")
    rows.append(f"# instance_b: {dg_b}")
    _atomic_write(output or "compare.csv", "\n".join(rows) + "\n")

    fa, fb = float(tr_a.f[-1]), float(tr_b.f[-1])
    gap = abs(fa - fb) / max(1.0, abs(fa), abs(fb))
    if gap < 1e-12:
        verdict = "tie"
    else:
        verdict = cfg_a.problem if fa < fb else cfg_b.problem
    print(f"instance_a={dg_a} instance_b={dg_b}")
    print(f"final f: {cfg_a.problem}={fa:.17g} {cfg_b.problem}={fb:.17g}")
    print(f"winner: {verdict}")
    return EXIT_OK


def _add_override_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--problem", choices=PROBLEMS)
    sub.add_argument("--reg", choices=REGS)
    sub.add_argument("--lambda", dest="lam", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--m", type=int)
    sub.add_argument("--n", type=int)
    sub.add_argument("--max-iters", dest="max_iters", type=int)
    sub.add_argument("--backtracking", action="store_const", const=True)
    sub.add_argument("--no-timing", dest="record_time", action="store_const",
                     const=False)
    sub.add_argument("--output")
    sub.add_argument("--emit-certificates", dest="emit_certificates",
                     action="store_const", const=True)


def _overrides_from(args: argparse.Namespace) -> dict:
    keys = ("problem", "reg", "lam", "seed", "m", "n", "max_iters",
            "backtracking", "record_time", "output", "emit_certificates")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _run_seed(payload) -> int:
    cfg_dict, seed = payload
    cfg_dict = dict(cfg_dict)
    cfg_dict["seed"] = seed
    base, ext = os.path.splitext(cfg_dict.get("output") or "")
    if base:
        cfg_dict["output"] = f"{base}_seed{seed}{ext}"
    else:
        cfg_dict.pop("output", None)
    cfg = parse_config(None, {_KEY_TO_FIELD.get(k, k): v for k, v in cfg_dict.items()})
    return run_experiment(cfg)


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="bregmin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config")
    _add_override_flags(p_run)
    p_run.add_argument("--seeds", help="comma-separated seed list")
    p_run.add_argument("--jobs", type=int, default=1)

    p_cmp = sub.add_parser("compare", help="side-by-side model comparison")
    p_cmp.add_argument("--config-a", required=True)
    p_cmp.add_argument("--config-b", required=True)
    p_cmp.add_argument("--output")

    p_chk = sub.add_parser("check", help="run certificates only")
    p_chk.add_argument("--config")
    _add_override_flags(p_chk)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config, _overrides_from(args))
            if args.seeds:
                seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
                payloads = [(config_to_dict(cfg), s) for s in seeds]
                if args.jobs > 1:
                    from concurrent.futures import ProcessPoolExecutor

                    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                        codes = list(pool.map(_run_seed, payloads))
                else:
                    codes = [_run_seed(p) for p in payloads]
                return max(codes, default=EXIT_OK)
            return run_experiment(cfg)
        if args.command == "compare":
            cfg_a = parse_config(args.config_a, {})
            cfg_b = parse_config(args.config_b, {})
            return compare_models(cfg_a, cfg_b, args.output)
        cfg = parse_config(args.config, _overrides_from(args))
        return run_experiment(cfg, check_only=True)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
