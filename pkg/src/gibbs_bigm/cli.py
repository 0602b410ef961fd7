"""Command-line driver: generate | calibrate | solve | validate | sweep.

Exit codes: 0 success, 2 no penalty weight found, 3 usage error, 4 I/O or
parse error, 5 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from ._validation import EnumerationCapExceeded
from .calibrator import CalibrationConfig, NoFeasibleTarget, calibrate_beta, calibrate_m
from .generators import (
    MnppSpec,
    PoSpec,
    TsplibError,
    gen_mnpp,
    gen_po,
    gen_tsp,
    gen_tsp_circle,
    gen_tsp_random,
    parse_tsplib,
    read_price_csv,
    returns_from_prices,
    synthetic_po_spec,
)
from .degeneracy import feasible_count
from .problem import ProblemInstance, big_m_l1, build_qubo, instance_to_dict, load_instance
from .solvers import EnergyTable, GibbsExact, SaSchedule, gibbs_sample, simulated_annealing, speedup_metric

log = logging.getLogger("gibbs_bigm")

EXIT_OK = 0
EXIT_NO_SOLUTION = 2
EXIT_USAGE = 3
EXIT_IO = 4
EXIT_CAP = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- formatting ---------------------------------------------------------------


def fmt(x) -> str:
    """CSV cell: 12 significant digits for reals, blanks for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def rows_to_csv(rows, columns=None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _sanitize(o):
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _sanitize(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_sanitize(v) for v in o]
    return o


def _write(args, text: str):
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


def emit(args, payload=None, rows=None):
    if args.format == "csv" and rows is not None:
        _write(args, rows_to_csv(rows))
    else:
        data = payload if payload is not None else rows
        _write(args, json.dumps(_sanitize(data), indent=2, default=_json_default) + "\n")


# -- argument helpers ---------------------------------------------------------


def parse_ef(text: str, n: int) -> float:
    """``inf``, ``alpha:<a>`` meaning ``a * n^2``, or a plain number."""
    text = text.strip()
    if text.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if text.startswith("alpha:"):
        return float(text[6:]) * n * n
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"bad E_f rule {text!r}; use inf, alpha:<value> or a number") from None


def parse_floats(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_int_range(text: str):
    """``a:b`` inclusive or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected an integer range a:b or list, got {text!r}") from None


def parse_m_grid(text: str):
    """``lo:hi:count`` on a log scale, or a comma-separated list."""
    parts = text.split(":")
    if len(parts) == 3:
        try:
            lo, hi, k = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"bad M grid {text!r}") from None
        if not (0 < lo < hi and k >= 2):
            raise UsageError("M grid needs 0 < lo < hi and at least two points")
        return list(np.geomspace(lo, hi, k))
    return parse_floats(text)


def _config(args, inst, beta=None, eta=None, E_f=None, v_cut=None) -> CalibrationConfig:
    lb = "trivial" if args.lower_bound is None else args.lower_bound
    return CalibrationConfig(
        beta=args.beta if beta is None else beta,
        eta=args.eta if eta is None else eta,
        E_f=parse_ef(args.ef, inst.n) if E_f is None else E_f,
        v_cut=args.vcut if v_cut is None else v_cut,
        n_samples=args.samples,
        delta=args.delta,
        seed=args.seed,
        mode=args.mode,
        exact_spectral=args.exact,
        auto_reduce=args.auto_reduce,
        lower_bound=lb,
    )


def _row_seed(seed, *index):
    if seed is None:
        return None
    return int(np.random.SeedSequence([seed, *index]).generate_state(1)[0])


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.family == "mnpp":
        if args.n is None or args.p is None:
            raise UsageError("mnpp needs --n and --p")
        values = parse_floats(args.values) if args.values else None
        inst = gen_mnpp(MnppSpec(args.n, args.p, values=values, seed=args.seed))
    elif args.family == "tsp":
        if args.layout == "file":
            if not args.file:
                raise UsageError("tsp --layout file needs --file")
            with open(args.file) as fh:
                inst = gen_tsp(parse_tsplib(fh.read()))
        elif args.nv is None:
            raise UsageError(f"tsp --layout {args.layout} needs --nv")
        elif args.layout == "circle":
            inst = gen_tsp_circle(args.nv)
        else:
            inst = gen_tsp_random(args.nv, seed=args.seed)
    else:
        if args.prices:
            with open(args.prices) as fh:
                mu, sigma = returns_from_prices(read_price_csv(fh.read()))
            inst = gen_po(PoSpec(mu, sigma, w=args.w, gamma=args.gamma))
        elif args.n is not None:
            inst = gen_po(synthetic_po_spec(args.n, w=args.w, gamma=args.gamma, seed=args.seed))
        else:
            raise UsageError("po needs --prices or --n")
    _write(args, json.dumps(instance_to_dict(inst)) + "\n")
    F = feasible_count(inst) if inst.family != "generic" else None
    print(f"n={inst.n} m={inst.m} |F|={F}", file=sys.stderr)
    return EXIT_OK


def _result_row(res, **extra):
    return {
        **extra,
        "status": res.status,
        "M_star": res.M_star,
        "eta": res.eta,
        "eta_used": res.eta_used,
        "eta_exist": res.eta_exist,
        "M_l1": res.M_l1,
        "delta": res.delta,
        "v_cut": res.v_cut,
        "E_LB": res.E_LB,
    }


def cmd_calibrate(args) -> int:
    inst = load_instance(args.instance)
    if args.fixed_m is not None:
        res = calibrate_beta(inst, _config(args, inst), args.fixed_m)
        row = {"M": res.M, "eta": res.eta, "beta_star": res.beta_star}
        emit(args, res.to_dict(), [row])
        print(f"beta*={fmt(res.beta_star) or 'none'} M={fmt(res.M)}", file=sys.stderr)
        return EXIT_OK if res.beta_star is not None else EXIT_NO_SOLUTION

    if args.vcut_sweep or args.ef_sweep:
        rows = []
        if args.vcut_sweep:
            for v in parse_int_range(args.vcut_sweep):
                rows.append(_result_row(calibrate_m(inst, _config(args, inst, v_cut=v)), v_cut_requested=v))
        else:
            for spec in args.ef_sweep.split(","):
                E_f = parse_ef(spec, inst.n)
                try:
                    res = calibrate_m(inst, _config(args, inst, E_f=E_f))
                    rows.append(_result_row(res, E_f=E_f))
                except NoFeasibleTarget as exc:
                    rows.append({"E_f": E_f, "status": "no_feasible_target", "error": str(exc)})
        emit(args, rows, rows)
        return EXIT_OK

    res = calibrate_m(inst, _config(args, inst))
    payload = {"config": _sanitize(vars(_config(args, inst))), "result": res.to_dict()}
    emit(args, payload, [_result_row(res)])
    if res.M_star is None:
        print(f"status={res.status} eta_exist={res.eta_exist:.6g}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    print(f"status={res.status} M*={res.M_star:.12g} M_l1={res.M_l1:.12g} eta_exist={res.eta_exist:.6g}", file=sys.stderr)
    return EXIT_OK


def _load_m(args, inst):
    if args.m is not None:
        return args.m
    if args.calibration:
        with open(args.calibration) as fh:
            d = json.load(fh)
        M = d.get("result", d).get("M_star")
        if M is None:
            raise UsageError("calibration file holds no penalty weight")
        return float(M)
    raise UsageError("need --m or --calibration")


def _run_solver(solver, reform, beta, count, seed, E_f, table=None, steps=200):
    if solver == "gibbs":
        return gibbs_sample(reform, beta, count, seed=seed, E_f=E_f, table=table)
    schedule = SaSchedule.ending_at(reform, beta, steps=steps, seed=seed)
    return simulated_annealing(reform, schedule, count, E_f=E_f)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    M = _load_m(args, inst)
    E_f = parse_ef(args.ef, inst.n)
    rep = _run_solver(args.solver, build_qubo(inst, M), args.beta, args.count, args.seed, E_f, steps=args.sa_steps)
    summary = {"M": M, "beta": args.beta, "E_f": E_f, **rep.summary()}
    emit(args, rep.to_dict() if args.samples_out else summary, [summary])
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    E_f = parse_ef(args.ef, inst.n)
    table = EnergyTable(inst) if args.solver == "gibbs" else None
    rows = []
    for i, eta in enumerate(parse_floats(args.etas)):
        if args.m is not None or args.calibration:
            M, status = _load_m(args, inst), "given"
        else:
            res = calibrate_m(inst, _config(args, inst, eta=eta, E_f=E_f))
            M, status = res.M_star, res.status
        row = {"eta": eta, "status": status, "M": M, "beta": args.beta}
        if M is not None:
            reform = build_qubo(inst, M)
            rep = _run_solver(args.solver, reform, args.beta, args.count, _row_seed(args.seed, i), E_f, table, args.sa_steps)
            hits = int(round(rep.eta_eff * len(rep)))
            ci = binomtest(hits, len(rep)).proportion_ci(confidence_level=0.95)
            row.update(eta_eff=rep.eta_eff, ci_low=ci.low, ci_high=ci.high, mean_feasible_objective=rep.mean_feasible_objective)
            if table is not None:
                row["eta_exact"] = GibbsExact(reform, args.beta, table).success_prob(E_f)
        rows.append(row)
    emit(args, rows, rows)
    return EXIT_OK


@dataclass
class SweepPlan:
    instances: list
    betas: list
    etas: list
    ef_rule: str
    m_values: list | None
    solver: str
    repetitions: int = 1
    count: int = 1000

    def __post_init__(self):
        if not (self.instances and self.betas and self.etas):
            raise UsageError("sweep grids must be non-empty")
        if self.m_values is not None and not self.m_values:
            raise UsageError("M grid must be non-empty")
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")

    def tasks(self):
        for ii, path in enumerate(self.instances):
            for beta in self.betas:
                for eta in self.etas:
                    for M in self.m_values or [None]:
                        for rep in range(self.repetitions):
                            yield (ii, path, beta, eta, M, rep)


SWEEP_COLUMNS = [
    "instance", "n", "beta", "eta", "E_f", "M", "status", "repetition",
    "eta_eff", "mean_feasible_objective", "best_energy", "M_l1", "speedup", "error",
]  # fmt: skip


def _sweep_row(args, plan, cache, index, task):
    ii, path, beta, eta, M, rep = task
    inst, table = cache[path]
    E_f = parse_ef(plan.ef_rule, inst.n)
    row = {"instance": path, "n": inst.n, "beta": beta, "eta": eta, "E_f": E_f, "repetition": rep}
    try:
        M_l1 = big_m_l1(inst, beta, eta)
        row["M_l1"] = M_l1
        if M is None:
            res = calibrate_m(inst, _config(args, inst, beta=beta, eta=eta, E_f=E_f))
            M, row["status"] = res.M_star, res.status
            if M is not None and M > 0:
                row["speedup"] = speedup_metric(M_l1, M)
        else:
            row["status"] = "fixed"
        row["M"] = M
        if M is None or plan.solver == "none":
            return row
        reform = build_qubo(inst, M)
        if plan.solver == "exact":
            g = GibbsExact(reform, beta, table)
            row.update(eta_eff=g.success_prob(E_f), mean_feasible_objective=g.mean_feasible_objective(), best_energy=float(g.energies.min()))
        else:
            seed = _row_seed(args.seed, index)
            r = _run_solver(plan.solver, reform, beta, plan.count, seed, E_f, table, args.sa_steps)
            row.update(eta_eff=r.eta_eff, mean_feasible_objective=r.mean_feasible_objective, best_energy=r.best_energy)
    except (ValueError, ArithmeticError) as exc:
        row["status"] = row.get("status", "error")
        row["error"] = str(exc)
    return row


def cmd_sweep(args) -> int:
    m_values = None if args.m_grid in (None, "calibrated") else parse_m_grid(args.m_grid)
    plan = SweepPlan(args.instances, parse_floats(args.betas), parse_floats(args.etas), args.ef, m_values, args.solver, args.reps, args.count)
    cache = {}
    for path in plan.instances:
        inst = load_instance(path)
        table = EnergyTable(inst) if plan.solver in ("exact", "gibbs") else None
        cache[path] = (inst, table)
    tasks = list(plan.tasks())
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda it: _sweep_row(args, plan, cache, *it), enumerate(tasks)))
    if args.format == "csv":
        _write(args, rows_to_csv(rows, SWEEP_COLUMNS))
    else:
        emit(args, rows)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _calibration_flags(p, with_eta=True):
    p.add_argument("--beta", type=float, required=True, help="inverse temperature")
    if with_eta:
        p.add_argument("--eta", type=float, default=0.5, help="target success probability")
    p.add_argument("--ef", default="inf", help="energy threshold: inf, alpha:<a> (a*n^2) or a number")
    p.add_argument("--vcut", type=int, default=None, help="degeneracy cut-off (family default if omitted)")
    p.add_argument("--samples", type=int, default=20_000, help="uniform feasible samples for the spectral histogram")
    p.add_argument("--delta", type=float, default=None, help="bin width (automatic if omitted)")
    p.add_argument("--mode", choices=("guaranteed", "practical"), default="guaranteed")
    p.add_argument("--exact", action="store_true", help="enumerate the feasible set instead of sampling it")
    p.add_argument("--auto-reduce", action="store_true", help="retry just below eta_exist when eta is unattainable")
    p.add_argument("--lower-bound", type=float, default=None, help="externally computed objective lower bound")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gibbs-bigm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a benchmark instance as JSON")
    g.add_argument("family", choices=("mnpp", "tsp", "po"))
    g.add_argument("--n", type=int, help="MNPP numbers / PO assets")
    g.add_argument("--p", type=int, help="MNPP partitions")
    g.add_argument("--values", help="MNPP numbers, comma-separated")
    g.add_argument("--nv", type=int, help="TSP cities")
    g.add_argument("--layout", choices=("circle", "random", "file"), default="circle")
    g.add_argument("--file", help="TSPLIB file for --layout file")
    g.add_argument("--prices", help="CSV of asset prices (header row of asset names)")
    g.add_argument("--w", type=int, default=3, help="PO bits per asset")
    g.add_argument("--gamma", type=float, default=1.0, help="PO risk aversion")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", parents=[common], help="compute the penalty weight M*")
    c.add_argument("instance")
    _calibration_flags(c)
    c.add_argument("--fixed-m", type=float, default=None, help="calibrate beta for this M instead")
    sweep = c.add_mutually_exclusive_group()
    sweep.add_argument("--vcut-sweep", help="v_cut values, a:b or list")
    sweep.add_argument("--ef-sweep", help="E_f rules, comma-separated")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("solve", parents=[common], help="sample the QUBO at a given M")
    s.add_argument("instance")
    s.add_argument("--m", type=float, default=None)
    s.add_argument("--calibration", help="calibrate output JSON holding M_star")
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--ef", default="inf")
    s.add_argument("--solver", choices=("gibbs", "sa"), default="gibbs")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--sa-steps", type=int, default=200)
    s.add_argument("--samples-out", action="store_true", help="include every sample in JSON output")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", parents=[common], help="calibrate and measure eta_eff per target eta")
    v.add_argument("instance")
    _calibration_flags(v, with_eta=False)
    v.add_argument("--etas", default="0.25,0.5,0.75")
    v.add_argument("--m", type=float, default=None)
    v.add_argument("--calibration")
    v.add_argument("--solver", choices=("gibbs", "sa"), default="gibbs")
    v.add_argument("--count", type=int, default=10_000)
    v.add_argument("--sa-steps", type=int, default=200)
    v.set_defaults(func=cmd_validate)

    w = sub.add_parser("sweep", parents=[common], help="grid over instances, beta, eta and M")
    w.add_argument("instances", nargs="+")
    w.add_argument("--betas", required=True)
    w.add_argument("--etas", default="0.5")
    w.add_argument("--ef", default="inf")
    w.add_argument("--m-grid", default="calibrated", help="lo:hi:count (log), a list, or 'calibrated'")
    w.add_argument("--solver", choices=("exact", "gibbs", "sa", "none"), default="exact")
    w.add_argument("--reps", type=int, default=1)
    w.add_argument("--count", type=int, default=1000)
    w.add_argument("--sa-steps", type=int, default=200)
    w.add_argument("--workers", type=int, default=4)
    w.add_argument("--vcut", type=int, default=None)
    w.add_argument("--samples", type=int, default=20_000)
    w.add_argument("--delta", type=float, default=None)
    w.add_argument("--mode", choices=("guaranteed", "practical"), default="guaranteed")
    w.add_argument("--exact", action="store_true")
    w.add_argument("--auto-reduce", action="store_true")
    w.add_argument("--lower-bound", type=float, default=None)
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gibbs-bigm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationCapExceeded as exc:
        print(f"gibbs-bigm: {exc}", file=sys.stderr)
        return EXIT_CAP
    except NoFeasibleTarget as exc:
        print(f"gibbs-bigm: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (OSError, json.JSONDecodeError, TsplibError, KeyError) as exc:
        print(f"gibbs-bigm: cannot read input: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"gibbs-bigm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
