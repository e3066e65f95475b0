"""Command-line entry point ``modred``.

Subcommands::

    modred benchmark [--mini] [--out DIR]
    modred table2 [--system FILE | --mini] [--orders 140,120,...] [--out CSV]
    modred bottom-up (--global | --freq) --system FILE --eps E1,E2,... [--out PREFIX]
    modred top-down (--global | --freq) --system FILE --subsystem Q ... [--out PREFIX]
    modred reduce (bt | fwbt) --model FILE --order R [--profile CSV] [--out FILE]
    modred check --system FILE

Every subcommand accepts ``--config FILE`` with a JSON object whose keys are
option names (dashes or underscores); explicit flags take precedence.
Exit codes: 0 success, 2 infeasible specification, 3 invalid input,
4 numerical failure. ``MODRED_THREADS`` caps the worker threads of the
per-frequency solvers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import budget
from .casegen import BENCHMARK_GRID, build_three_beam_benchmark, epsilon_c_profile, three_beam_specs
from .interconnect import (
    CoupledResponse,
    check_internal_stability,
    check_wellposed,
    load_coupled_system,
    save_coupled_system,
    upper_lft_Gc,
)
from .lti import FrequencyGrid, LTIError, NumericalError, StateSpaceModel, _sigma_max_stack
from .pipelines import bottom_up_sweep, bound_comparison_row, top_down_pipeline
from .reduction import (
    PAPER_SUM,
    STANDARD_TWICE_SUM,
    balanced_truncate,
    fit_rational_weight,
    fw_balanced_truncate,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4

TABLE_ORDERS = (140, 120, 100, 80, 60, 40, 20)


class InvalidInput(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "-" if not np.isfinite(v) else repr(v)


def _json_default(o):
    """Convert numpy scalars and arrays for ``json.dumps``."""
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"Object of type {type(o).__name__} is not JSON serializable")


def _write_text(text: str, path: Optional[str]):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _floats(text: str, name: str) -> List[float]:
    try:
        return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInput(f"{name}: {exc}") from None


def _grid(args) -> FrequencyGrid:
    lo, hi, n = BENCHMARK_GRID
    wmin = args.omega_min if args.omega_min is not None else 10.0**lo
    wmax = args.omega_max if args.omega_max is not None else 10.0**hi
    pts = args.points if args.points is not None else n
    if not (0 < wmin < wmax) or pts < 2:
        raise InvalidInput("grid needs 0 < omega-min < omega-max and at least 2 points")
    return FrequencyGrid(np.logspace(np.log10(wmin), np.log10(wmax), int(pts)))


def _system(args):
    if getattr(args, "system", None):
        if not os.path.exists(args.system):
            raise InvalidInput(f"no such file: {args.system}")
        return load_coupled_system(args.system)
    if getattr(args, "benchmark", False) or getattr(args, "mini", False):
        return build_three_beam_benchmark(mini=getattr(args, "mini", False))
    raise InvalidInput("give --system FILE (or --benchmark / --mini)")


def _workers_and_warm():
    n = budget.default_workers()
    return n, n == 1


def _read_profile_csv(path, ncols=None):
    """Columns ``omega, v_1, ..., v_k``; returns ``(omegas, values[k, N])``."""
    if not os.path.exists(path):
        raise InvalidInput(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidInput(f"{path}: expected columns omega, values...")
    if ncols is not None and data.shape[1] - 1 != ncols:
        raise InvalidInput(f"{path}: expected {ncols} value columns")
    return data[:, 0], data[:, 1:].T


def _add_grid(p):
    p.add_argument("--omega-min", type=float, help="lowest frequency in rad/s")
    p.add_argument("--omega-max", type=float, help="highest frequency in rad/s")
    p.add_argument("--points", type=int, help="number of log-spaced grid points")


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modred", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("benchmark", help="build and export the three-beam benchmark")
    _add_common(p)
    p.add_argument("--mini", action="store_true", help="10/4/6 elements instead of 100/40/60")
    p.add_argument("--out", default="benchmark", help="output directory")

    p = sub.add_parser("table2", help="actual vs certified coupled errors per reduction order")
    _add_common(p)
    p.add_argument("--system")
    p.add_argument("--mini", action="store_true")
    p.add_argument("--orders", default=",".join(map(str, TABLE_ORDERS)))
    p.add_argument("--subsystem", type=int, default=1, help="1-based index of the reduced subsystem")
    p.add_argument("--convention", choices=[PAPER_SUM, STANDARD_TWICE_SUM], default=STANDARD_TWICE_SUM)
    p.add_argument("--out", help="CSV path (stdout by default)")
    _add_grid(p)

    for name, helptext in (("bottom-up", "bound on the coupled error from subsystem levels"),
                           ("top-down", "subsystem budget from a coupled accuracy level")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        mode = p.add_mutually_exclusive_group(required=True)
        mode.add_argument("--global", dest="mode", action="store_const", const="global")
        mode.add_argument("--freq", dest="mode", action="store_const", const="freq")
        p.add_argument("--system")
        p.add_argument("--benchmark", action="store_true", help="use the built-in benchmark")
        p.add_argument("--mini", action="store_true")
        p.add_argument("--out", help="output prefix for .csv/.json (stdout CSV by default)")
        _add_grid(p)
        if name == "bottom-up":
            p.add_argument("--eps", help="comma-separated constant levels eps_1..eps_k")
            p.add_argument("--eps-csv", help="CSV with columns omega, eps_1..eps_k (--freq)")
            p.add_argument("--subsystem", type=int, default=1, help="1-based index for --reduce-order")
            p.add_argument("--reduce-order", type=int,
                           help="balanced-truncate the subsystem to this order and emit the sweep curves")
            p.add_argument("--convention", choices=[PAPER_SUM, STANDARD_TWICE_SUM],
                           default=STANDARD_TWICE_SUM)
        else:
            p.add_argument("--subsystem", type=int, required=False, help="1-based index q")
            p.add_argument("--eps-c", type=float, help="constant coupled accuracy level")
            p.add_argument("--eps-c-csv", help="CSV with columns omega, eps_c (--freq)")
            p.add_argument("--beta1", type=float, help="profile eps_c = max(beta1 sigma(G_c), beta2)")
            p.add_argument("--beta2", type=float, default=5e-7)
            p.add_argument("--eps-other", default="", help="levels of the other subsystems")
            p.add_argument("--pipeline-order", type=int,
                           help="also reduce subsystem q to this order with a fitted weight and validate")

    p = sub.add_parser("reduce", help="balanced or frequency-weighted balanced truncation")
    _add_common(p)
    p.add_argument("method", choices=["bt", "fwbt"])
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--system", help="coupled-system JSON (with --subsystem)")
    p.add_argument("--subsystem", type=int, default=1)
    p.add_argument("--order", type=int, required=False)
    p.add_argument("--convention", choices=[PAPER_SUM, STANDARD_TWICE_SUM], default=STANDARD_TWICE_SUM)
    p.add_argument("--profile", help="CSV with columns omega, eps (fwbt)")
    p.add_argument("--rolloff", type=int, default=8)
    p.add_argument("--out", help="result JSON path (stdout by default)")

    p = sub.add_parser("check", help="well-posedness and internal stability of a coupled system")
    _add_common(p)
    p.add_argument("--system")
    p.add_argument("--benchmark", action="store_true")
    p.add_argument("--mini", action="store_true")
    return parser


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"config: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidInput("config must be a JSON object")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest in given or not hasattr(args, dest):
            continue
        setattr(args, dest, val)
    return args


def cmd_benchmark(args) -> int:
    cs = build_three_beam_benchmark(mini=args.mini)
    os.makedirs(args.out, exist_ok=True)
    names = []
    for j, g in enumerate(cs.subsystems, start=1):
        name = f"subsystem_{j}.json"
        with open(os.path.join(args.out, name), "w") as fh:
            json.dump(g.to_dict(), fh)
        names.append(name)
    specs = three_beam_specs((10, 4, 6) if args.mini else (100, 40, 60))
    doc = save_coupled_system(cs, metadata={
        "elements": [s.n_elements for s in specs],
        "states": [g.n for g in cs.subsystems],
        "grid": {"omega_min": 10.0 ** BENCHMARK_GRID[0], "omega_max": 10.0 ** BENCHMARK_GRID[1],
                 "points": BENCHMARK_GRID[2]},
    })
    doc["subsystems"] = names
    with open(os.path.join(args.out, "coupled.json"), "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"wrote {len(names)} subsystem models and coupled.json to {args.out} "
          f"(states {[g.n for g in cs.subsystems]})")
    return EXIT_OK


def cmd_table2(args) -> int:
    cs = _system(args)
    grid = _grid(args)
    q = args.subsystem - 1
    if not 0 <= q < cs.k:
        raise InvalidInput("subsystem index out of range")
    orders = [int(v) for v in _floats(args.orders, "orders")]
    resp = CoupledResponse(cs)
    header = ["r", "Ec_hinf", "eps_c_actual", "eps_c_apriori", "ratio_actual", "ratio_apriori",
              "ratio_subsystem", "eps_q_apriori", "eps_q_grid", "eps_q_hinf"]
    rows = []
    for r in orders:
        try:
            row = bound_comparison_row(cs, r, grid, q, args.convention, response=resp)
        except (LTIError, np.linalg.LinAlgError) as exc:
            print(f"order {r}: {exc}", file=sys.stderr)
            rows.append([r] + [None] * (len(header) - 1))
            continue
        rows.append([r, row.ec_hinf, row.eps_c_actual, row.eps_c_apriori, row.ratio_actual,
                     row.ratio_apriori, row.ratio_subsystem, row.eps_q_apriori, row.eps_q_grid,
                     row.eps_q_hinf])
    _write_text(_csv_text(header, rows), args.out)
    return EXIT_OK


def _emit_result(res: budget.BoundResult, prefix: Optional[str]):
    if prefix:
        _write_text(res.to_csv(), prefix + ".csv")
        _write_text(res.to_json(), prefix + ".json")
    else:
        sys.stdout.write(res.to_csv())


def cmd_bottom_up(args) -> int:
    cs = _system(args)
    workers, warm = _workers_and_warm()
    if args.mode == "freq" and args.reduce_order is not None:
        q = args.subsystem - 1
        if not 0 <= q < cs.k:
            raise InvalidInput("subsystem index out of range")
        red = balanced_truncate(cs.subsystems[q], args.reduce_order, args.convention)
        sweep = bottom_up_sweep(cs, red, _grid(args), q)
        tab = sweep.table()
        keys = list(tab)
        text = _csv_text(keys, zip(*[tab[k] for k in keys]))
        _write_text(text, args.out + "_sweep.csv" if args.out else None)
        if args.out:
            _emit_result(sweep.constant, args.out + "_constant")
            _emit_result(sweep.shaped, args.out + "_sigma")
        return EXIT_OK
    if args.mode == "global":
        if args.eps is None:
            raise InvalidInput("--global needs --eps")
        grid = _grid(args)
        eps = _floats(args.eps, "eps")
        if len(eps) != cs.k:
            raise InvalidInput(f"need {cs.k} levels")
        res = budget.bottom_up_global(cs, eps, grid, warm_start=warm, workers=workers)
    else:
        if args.eps_csv:
            w, prof = _read_profile_csv(args.eps_csv, cs.k)
            grid = FrequencyGrid(w)
        elif args.eps is not None:
            grid = _grid(args)
            prof = np.array(_floats(args.eps, "eps"))
            if prof.size != cs.k:
                raise InvalidInput(f"need {cs.k} levels")
        else:
            raise InvalidInput("--freq needs --eps or --eps-csv")
        res = budget.bottom_up_freq(cs, prof, grid, warm_start=warm, workers=workers)
    _emit_result(res, args.out)
    return _report_global(res, args.mode, "eps_c")


def _report_global(res, mode, name) -> int:
    if mode != "global":
        n_bad = int((~res.feasible).sum())
        print(f"{len(res.per_frequency) - n_bad} feasible / {n_bad} infeasible points", file=sys.stderr)
        return EXIT_OK
    if res.global_value is None:
        print(f"{name}: infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{name} = {res.global_value!r}", file=sys.stderr)
    return EXIT_OK


def cmd_top_down(args) -> int:
    cs = _system(args)
    if args.subsystem is None:
        raise InvalidInput("--subsystem is required")
    q = args.subsystem - 1
    if not 0 <= q < cs.k:
        raise InvalidInput("subsystem index out of range")
    workers, warm = _workers_and_warm()
    other = _floats(args.eps_other, "eps-other") if args.eps_other else [0.0] * (cs.k - 1)
    if len(other) != cs.k - 1:
        raise InvalidInput(f"need {cs.k - 1} levels for the other subsystems")
    if args.mode == "global":
        if args.eps_c is None:
            raise InvalidInput("--global needs --eps-c")
        res = budget.top_down_global(cs, args.eps_c, other, q, _grid(args), warm_start=warm,
                                     workers=workers)
        _emit_result(res, args.out)
        return _report_global(res, "global", f"eps_{q + 1}")
    if args.eps_c_csv:
        w, prof = _read_profile_csv(args.eps_c_csv, 1)
        grid, spec = FrequencyGrid(w), prof[0]
    elif args.eps_c is not None:
        grid = _grid(args)
        spec = np.full(len(grid), args.eps_c)
    elif args.beta1 is not None:
        grid = _grid(args)
        spec = epsilon_c_profile(_sigma_max_stack(CoupledResponse(cs).Gc(grid.omegas)),
                                 args.beta1, args.beta2)
    else:
        raise InvalidInput("--freq needs --eps-c, --eps-c-csv or --beta1")
    if args.pipeline_order is not None:
        if any(other):
            raise InvalidInput("the reduction pipeline assumes the other subsystems are exact")
        out = top_down_pipeline(cs, grid, args.pipeline_order, q, eps_c=spec)
        tab = out.table()
        keys = list(tab)
        text = _csv_text(keys, zip(*[tab[k] for k in keys]))
        if args.out:
            _write_text(text, args.out + "_pipeline.csv")
            _emit_result(out.budget, args.out)
        else:
            sys.stdout.write(text)
        print(f"budget met: {out.budget_met}; spec met: {out.spec_met}; "
              f"a priori validation met: {out.validation_met}", file=sys.stderr)
        return EXIT_OK
    lev = np.repeat(np.array(other, dtype=float)[:, None], len(grid), axis=1)
    res = budget.top_down_freq(cs, spec, lev, q, grid, warm_start=warm, workers=workers)
    _emit_result(res, args.out)
    return _report_global(res, "freq", f"eps_{q + 1}")


def cmd_reduce(args) -> int:
    if args.order is None:
        raise InvalidInput("--order is required")
    if args.model:
        if not os.path.exists(args.model):
            raise InvalidInput(f"no such file: {args.model}")
        with open(args.model) as fh:
            sys_ = StateSpaceModel.from_dict(json.load(fh))
    elif args.system:
        cs = _system(args)
        if not 1 <= args.subsystem <= cs.k:
            raise InvalidInput("subsystem index out of range")
        sys_ = cs.subsystems[args.subsystem - 1]
    else:
        raise InvalidInput("give --model or --system")
    if args.method == "bt":
        res = balanced_truncate(sys_, args.order, args.convention)
        doc = res.to_dict()
    else:
        if not args.profile:
            raise InvalidInput("fwbt needs --profile")
        w, prof = _read_profile_csv(args.profile, 1)
        fit = fit_rational_weight(prof[0], FrequencyGrid(w), rolloff=args.rolloff)
        res = fw_balanced_truncate(sys_, fit.model, args.order)
        doc = res.to_dict()
        doc["weight"] = {"model": fit.model.to_dict(), "max_log_error": fit.max_log_error,
                         "kappa": fit.kappa, "warning": fit.warning}
    _write_text(json.dumps(doc, default=_json_default) + "\n", args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    cs = _system(args)
    cert = check_wellposed(cs)
    stable = bool(check_internal_stability(cs)) if cert.ok else False
    print(f"well-posed: {cert.ok} (condition number {cert.condition_number:.3e}); "
          f"internally stable: {stable}")
    if cert.ok:
        gc = upper_lft_Gc(cs)
        print(f"G_c: {gc.n} states, {gc.m} inputs, {gc.p} outputs")
    return EXIT_OK if (cert.ok and stable) else EXIT_INVALID


COMMANDS = {
    "benchmark": cmd_benchmark,
    "table2": cmd_table2,
    "bottom-up": cmd_bottom_up,
    "top-down": cmd_top_down,
    "reduce": cmd_reduce,
    "check": cmd_check,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LTIError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
