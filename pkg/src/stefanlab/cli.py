"""Command line entry point: ``stefanlab run|sweep|threshold|analyze``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 analysis coverage error.
Set ``STEFANLAB_THREADS`` to cap BLAS threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    CoverageError,
    ParabolicCylinder,
    degiorgi_levels,
    degiorgi_threshold,
    energy_inequality_report,
    fit_modulus,
    fit_sigma_constants,
    isoperimetric_diagnostic,
    normalize_run,
    oscillation_decay_report,
    rescaled_field,
    simulate_recursion,
    truncation_energy,
)
from .analysis.oscillation import alternative_constants
from .config import SCALAR_KEYS, SCHEMA, ConfigError, ExperimentConfig, load_config, parse_config
from .records import RunRecord
from .solver import CFLViolation, NewtonError, ResumeError, run

__all__ = ["main", "run_experiment", "sweep", "threshold_tool", "analyze_directory", "EXIT_CODES"]

logger = logging.getLogger("stefanlab")

EXIT_CODES = {"ok": 0, "config": 2, "solver": 3, "coverage": 4}
THREADS_ENV = "STEFANLAB_THREADS"
MAX_PRINCIPLE_TOL = {"explicit": 1e-12, "implicit": 1e-8}
DECAY_MARGIN = 1e-3
MU0_SPREAD_LIMIT = 0.2
ENERGY_SPREAD_LIMIT = 3.0
LINF_TOL = 1e-10


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_csv_cell(r.get(c)) for c in cols])


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return _fmt(v)


def write_summary(path: Path, items: list[tuple[str, object]]) -> None:
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key} = {_fmt(value)}\n")


@dataclass
class RunAnalysis:
    summary: list = field(default_factory=list)  # (KEY, value) in order
    mu0: float | None = None
    c_emp: float | None = None
    sigma_ratio: float | None = None

    def get(self, key):
        for k, v in self.summary:
            if k == key:
                return v
        return None


def analyze_run(record: RunRecord, cfg: ExperimentConfig, out: Path | None) -> RunAnalysis:
    """Every configured report for one run; CSVs go to ``out`` when given."""
    v = cfg.values
    res = RunAnalysis()
    scheme = v["problem.scheme"]
    u0 = record.u[0]
    tol = MAX_PRINCIPLE_TOL[scheme]
    lo, hi = float(np.min(record.extrema[:, 2])), float(np.max(record.extrema[:, 3]))
    res.summary.append(("MAXIMUM_PRINCIPLE", bool(lo >= u0.min() - tol and hi <= u0.max() + tol)))
    res.summary.append(("LINF_BOUND", record.linf_bound))
    res.summary.append(("TIME_STEP", record.dt))
    if scheme == "implicit" and record.newton_iterations:
        res.summary.append(("NEWTON_MAX_ITERATIONS", int(max(record.newton_iterations))))
    if not v["analysis.enabled"] or v["problem.T"] == 0:
        return res

    alpha, R, x0, t0 = v["kernel.alpha"], v["analysis.radius"], cfg.center, cfg.t0
    cyl = ParabolicCylinder(x0, t0, R, alpha)
    norm = normalize_run(record, cyl)
    nrun = norm.run

    decay = oscillation_decay_report(record, x0, t0, R, v["analysis.depth"], alpha)
    res.mu0 = decay.mu0
    res.summary.append(("MU0", decay.mu0))
    res.summary.append(("OSCILLATION_DECAY", decay.mu0 is not None and decay.mu0 <= 1 - DECAY_MARGIN))
    res.summary.append(("DECAY_FLAGS", len(decay.flags)))

    reg = _regularized(cfg, record)
    span = norm.upper - norm.lower
    if span > 0:
        inf_d = reg.inf_derivative(norm.lower, norm.upper)
        jump = float(reg.beta_eps(norm.upper) - reg.beta_eps(norm.lower))
        res.sigma_ratio = inf_d * span / jump if jump > 0 else None
    porous = None
    if v["nonlinearity.kind"] == "porous" and res.sigma_ratio is not None:
        res.summary.append(("POROUS_ELL", res.sigma_ratio))
        if v["analysis.porous_C"] is not None and v["analysis.porous_N0"] is not None:
            porous = {"ell": res.sigma_ratio, "C": v["analysis.porous_C"], "N0": v["analysis.porous_N0"]}
    try:
        fit = fit_modulus(decay, porous=porous)
    except ValueError as exc:
        logger.warning("modulus fit skipped: %s", exc)
        fit = None
    if fit is not None:
        res.summary += [
            ("MODULUS_MODEL", fit.model),
            ("HOLDER_GAMMA", fit.holder["gamma"]),
            ("HOLDER_RESIDUAL", fit.holder["residual"]),
            ("LOG_POWER_P", fit.log_power["p"]),
            ("LOG_POWER_OFFSET", fit.log_power["offset"]),
            ("LOG_POWER_RESIDUAL", fit.log_power["residual"]),
        ]
        if fit.geometric is not None:
            res.summary.append(("POROUS_GEOMETRIC_DECAY", fit.geometric["holds"]))

    ladder_rows = []
    for m in range(v["analysis.levels"]):
        lad = degiorgi_levels(m, alpha)
        ladder_rows.append({"m": m, "k_m": lad.k, "R_m": lad.R, "I_m": truncation_energy(nrun, lad, x0, t0, R)})
    energies = [r["I_m"] for r in ladder_rows]
    res.summary.append(("TRUNCATION_MONOTONE", all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(energies, energies[1:]))))

    lad = degiorgi_levels(v["analysis.energy_level"], alpha)
    energy = energy_inequality_report(nrun, v["analysis.energy_k"], lad, x0, t0, R)
    res.c_emp = energy.c_emp
    res.summary += [
        ("ENERGY_LHS", energy.lhs),
        ("ENERGY_RHS", energy.rhs),
        ("ENERGY_C_EMP", energy.c_emp),
        ("ENERGY_FINITE", bool(np.isfinite(energy.c_emp))),
    ]

    lam, sigma, c0, delta = v["analysis.lambda"], v["analysis.sigma"], v["analysis.c0"], v["analysis.delta"]
    k0 = alternative_constants(sigma, min(delta, 1.0), lam)["k0"]
    iso_rows, time_rows = [], []
    for k in range(k0 + 1):
        diag = isoperimetric_diagnostic(nrun, lam, cyl, sigma, c0, delta, values=rescaled_field(nrun.u, sigma, lam, k))
        iso_rows.append({"k": k, "A": diag.A, "B": diag.B, "C": diag.C, "measure_q1": diag.measure_q1,
                         "hypothesis": diag.hypothesis, "conclusion": diag.conclusion, "implication": diag.implication})
        if k == 0:
            time_rows = [{"t": t, "E": e, "M": mm} for t, e, mm in zip(diag.times, diag.E, diag.M)]
    res.summary += [
        ("ISOPERIMETRIC_IMPLICATION", all(r["implication"] for r in iso_rows)),
        ("ISOPERIMETRIC_NONVACUOUS", sum(1 for r in iso_rows if r["hypothesis"])),
    ]

    if out is not None:
        write_csv(out / "decay.csv", decay.table())
        write_csv(out / "degiorgi.csv", ladder_rows)
        write_csv(out / "isoperimetric.csv", iso_rows)
        write_csv(out / "isoperimetric_time.csv", time_rows)
        with open(out / "decay_curve.dat", "w") as fh:
            for row in decay.rows:
                fh.write(f"{row.radius!r} {row.osc!r}\n")
        write_summary(out / "summary.txt", res.summary)
    return res


def _regularized(cfg: ExperimentConfig, record: RunRecord):
    from .nonlinearity import regularize

    return regularize(cfg.nonlinearity(), float(record.meta["problem"]["epsilon"]))


def _experiment_meta(cfg: ExperimentConfig) -> dict:
    return {"experiment": {"config": cfg.to_dict()}}


def run_experiment(cfg: ExperimentConfig, out_dir, resume: bool = False) -> tuple[int, Path]:
    """Solve and analyse one configuration; returns ``(exit code, directory)``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if not cfg.is_ladder:
            record = run(cfg.problem(), out_dir=out, resume=resume, meta_extra=_experiment_meta(cfg))
            analyze_run(record, cfg, out)
        else:
            (out / "experiment.json").write_text(json.dumps(_experiment_meta(cfg), indent=2, sort_keys=True) + "\n")
            records = []
            for eps in cfg.epsilons:
                sub = out / _eps_dir(eps)
                records.append(run(cfg.problem(eps), out_dir=sub, resume=resume, meta_extra=_experiment_meta(cfg)))
            _ladder_report(records, cfg, out)
    except (CFLViolation, NewtonError, ResumeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_CODES["solver"], out
    except CoverageError as exc:
        print(f"analysis coverage error: {exc}", file=sys.stderr)
        return EXIT_CODES["coverage"], out
    return EXIT_CODES["ok"], out


def _eps_dir(eps: float) -> str:
    return f"eps_{eps!r}"


def _ladder_report(records: list, cfg: ExperimentConfig, out: Path) -> list:
    analyses = [analyze_run(r, cfg, out / _eps_dir(e)) for r, e in zip(records, cfg.epsilons)]
    finals = [r.final_u for r in records]
    dist = [float(np.max(np.abs(a - b))) for a, b in zip(finals, finals[1:])]
    rows = []
    for i, (e, r, a) in enumerate(zip(cfg.epsilons, records, analyses)):
        rows.append({"epsilon": e, "linf_bound": r.linf_bound, "distance_to_next": dist[i] if i < len(dist) else None,
                     "mu0": a.mu0, "c_emp": a.c_emp, "modulus": a.get("MODULUS_MODEL"),
                     "holder_gamma": a.get("HOLDER_GAMMA"), "sigma_ratio": a.sigma_ratio})
    write_csv(out / "epsilon_ladder.csv", rows)
    linf = [r.linf_bound for r in records]
    mus = [a.mu0 for a in analyses if a.mu0 is not None]
    cs = [a.c_emp for a in analyses if a.c_emp is not None]
    summary = [
        ("EPSILONS", " ".join(repr(e) for e in cfg.epsilons)),
        ("MAXIMUM_PRINCIPLE", all(a.get("MAXIMUM_PRINCIPLE") for a in analyses)),
        ("LINF_BOUND", max(linf)),
        ("EPSILON_UNIFORM_LINF", bool(max(linf) - min(linf) <= LINF_TOL)),
        ("LADDER_CAUCHY", all(dist[i + 1] <= 1.5 * dist[i] + 1e-14 for i in range(len(dist) - 1))),
    ]
    if mus:
        summary += [
            ("MU0_MAX", max(mus)),
            ("OSCILLATION_DECAY", all(m <= 1 - DECAY_MARGIN for m in mus)),
            ("MU0_SPREAD", max(mus) - min(mus)),
            ("MU0_EPSILON_STABLE", bool(max(mus) - min(mus) <= MU0_SPREAD_LIMIT)),
        ]
    if cs and min(cs) > 0:
        spread = max(cs) / min(cs)
        summary += [("ENERGY_C_EMP_SPREAD", spread), ("ENERGY_EPSILON_STABLE", bool(np.isfinite(spread) and spread <= ENERGY_SPREAD_LIMIT))]
    pairs = [(a.sigma_ratio, 1 - a.mu0) for a in analyses if a.sigma_ratio and a.mu0 is not None]
    if len(pairs) >= 2 and len({round(p[0], 12) for p in pairs}) >= 2:
        fitc = fit_sigma_constants([p[0] for p in pairs], [p[1] for p in pairs])
        summary += [("SIGMA_FIT_C", fitc["C"]), ("SIGMA_FIT_N0", fitc["N0"])]
    write_summary(out / "summary.txt", summary)
    return rows


def analyze_directory(path) -> int:
    d = Path(path)
    try:
        if (d / "experiment.json").exists():
            meta = json.loads((d / "experiment.json").read_text())
            cfg = parse_config(meta["experiment"]["config"])
            records = [RunRecord.load(d / _eps_dir(e)) for e in cfg.epsilons]
            _ladder_report(records, cfg, d)
        elif (d / "meta.json").exists():
            record = RunRecord.load(d)
            cfg = parse_config(record.meta["experiment"]["config"])
            analyze_run(record, cfg, d)
        else:
            print(f"config error: {d} is not a run directory", file=sys.stderr)
            return EXIT_CODES["config"]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except CoverageError as exc:
        print(f"analysis coverage error: {exc}", file=sys.stderr)
        return EXIT_CODES["coverage"]
    return EXIT_CODES["ok"]


def _parse_value(key: str, text: str):
    typ = SCHEMA[key][0]
    if typ is float:
        return float(text)
    if typ is int:
        return int(text)
    if typ is bool:
        return text.lower() in ("1", "true", "yes")
    return text


def sweep(cfg: ExperimentConfig, param: str, values: list, out_dir) -> tuple[int, Path]:
    """One experiment per value in ``<out>/<param>=<value>``; combined table in ``sweep.csv``."""
    if param not in SCALAR_KEYS:
        raise ConfigError(f"{param}: not a scalar configuration key")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    code = EXIT_CODES["ok"]
    for raw in values:
        value = _parse_value(param, raw) if isinstance(raw, str) else raw
        child = cfg.with_value(param, value)
        if param == "problem.epsilon" and child.is_ladder:
            child = child.with_value("problem.epsilon_ladder", None)
        code, sub = run_experiment(child, out / f"{param}={value!r}")
        if code != EXIT_CODES["ok"]:
            print(f"sweep aborted at {param}={value!r}; partial results for {len(rows)} value(s) in {out}", file=sys.stderr)
            break
        row = {param: value}
        row.update(_read_summary(sub / "summary.txt"))
        rows.append(row)
    write_csv(out / "sweep.csv", rows)
    return code, out


def _read_summary(path: Path) -> dict:
    out = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if " = " in line:
                k, v = line.split(" = ", 1)
                out[k] = v
    return out


def threshold_tool(C: float, n: int, alpha: float, I0: float | None = None, steps: int = 200,
                   convention: str = "literal", stream=None) -> int:
    stream = stream or sys.stdout
    thr = degiorgi_threshold(C, n, alpha)
    print(f"threshold = {thr!r}", file=stream)
    seed = thr / 2 if I0 is None else I0
    trace = simulate_recursion(seed, C, n, alpha, steps, convention=convention)
    print(f"I0 = {seed!r}", file=stream)
    print(f"convention = {convention}", file=stream)
    for i, val in enumerate(trace.values):
        print(f"{i} {val!r}", file=stream)
    state = "decaying" if trace.decayed else ("diverging" if trace.diverged else "undecided")
    print(f"trace = {state}", file=stream)
    return EXIT_CODES["ok"]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stefanlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve and analyse one configuration (a .cfg file or a run's meta.json)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: output.directory from the config)")
    r.add_argument("--resume", action="store_true", help="continue from the last snapshot in the output directory")

    s = sub.add_parser("sweep", help="run a configuration once per value of a scalar key")
    s.add_argument("config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", nargs="+", required=True)
    s.add_argument("--out")

    t = sub.add_parser("threshold", help="print the smallness threshold and the recursion trace")
    t.add_argument("--C", type=float, default=1.0)
    t.add_argument("--n", type=int, default=1)
    t.add_argument("--alpha", type=float, default=1.0)
    t.add_argument("--I0", type=float, default=None)
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--convention", choices=("literal", "standard"), default="literal")

    a = sub.add_parser("analyze", help="recompute reports for an existing run directory")
    a.add_argument("run_dir")
    return p


def _thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    limiter = _thread_limit()
    try:
        if args.command == "threshold":
            try:
                return threshold_tool(args.C, args.n, args.alpha, args.I0, args.steps, args.convention)
            except ValueError as exc:
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CODES["config"]
        if args.command == "analyze":
            return analyze_directory(args.run_dir)
        try:
            cfg = load_config(args.config)
            if args.command == "run":
                code, out = run_experiment(cfg, args.out or cfg["output.directory"], resume=args.resume)
            else:
                code, out = sweep(cfg, args.param, args.values, args.out or cfg["output.directory"])
        except (ConfigError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CODES["config"]
        if code == 0:
            print(out)
        return code
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
