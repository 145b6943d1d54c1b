"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import DomainError, read_path_csv, write_path_csv
from .estimators import EstimatorParams, hurst_log_ratio, hurst_smoothed_log, increments, integrated_hurst
from .fracmath import AsymVarConfig, tau_squared, tau_squared_lrv
from .harness import (ConfigError, ExperimentConfig, load_config_file, run_rate_study,
                      run_test_study, scenario_theta)
from .hypotests import FunctionClass, MCSettings, test_constancy, test_gof
from .localpoly import Kernel
from .simulate import FbmConfig, MbmConfig, mbm_diagnostics, simulate_fbm, simulate_mbm

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p):
    p.add_argument("--config", help="JSON or YAML file whose keys provide defaults for the flags")
    p.add_argument("--threads", type=int, default=1, help="maximum worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def _estimator_flags(p):
    p.add_argument("--kernel", default="epanechnikov", choices=["epanechnikov", "uniform", "triangular"])
    p.add_argument("--bandwidth", type=float, default=None, help="default: c * n^(-1/(2 eta + 1))")
    p.add_argument("--bandwidth-const", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--integrated-degree", type=int, default=0)
    p.add_argument("--epsilon-floor", type=float, default=1e-3)
    p.add_argument("--lag", type=int, default=None, help="default: ceil(n^0.3)")


def _scenario_flags(p):
    p.add_argument("--scenario", default="constant_h", choices=["constant_h", "smooth_h", "jump_h", "linear_h", "custom"])
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--h-before", type=float, default=0.3)
    p.add_argument("--h-after", type=float, default=0.7)
    p.add_argument("--jump-at", type=float, default=0.5)
    p.add_argument("--intercept", type=float, default=0.4)
    p.add_argument("--slope", type=float, default=0.3)
    p.add_argument("--theta-file", default=None)
    p.add_argument("--sigma", default="constant", choices=["constant", "sinusoidal"])
    p.add_argument("--sigma-amplitude", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mbmhurst", description="Time-varying Hurst exponent: simulation, estimation, tests.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate a sample path (CSV t,x)")
    simsub = sim.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    f = simsub.add_parser("fbm")
    _common(f)
    f.add_argument("--hurst", type=float, default=0.5)
    f.add_argument("--sigma-value", type=float, default=1.0, dest="sigma_value")
    f.add_argument("--n", type=int, default=1024)
    f.add_argument("--lead-in", type=int, default=3)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("-o", "--output", default="-")
    m = simsub.add_parser("mbm")
    _common(m)
    _scenario_flags(m)
    m.add_argument("--n", type=int, default=1024)
    m.add_argument("--lead-in", type=int, default=3)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--variant", default="ito", choices=["ito", "classical"])
    m.add_argument("--m-sub", type=int, default=16)
    m.add_argument("--past-horizon", type=float, default=10.0)
    m.add_argument("--diagnostics", default=None, help="write mesh diagnostics JSON here ('-' for stderr)")
    m.add_argument("-o", "--output", default="-")

    est = sub.add_parser("estimate", help="estimate the Hurst curve of a path")
    _common(est)
    _estimator_flags(est)
    est.add_argument("--input", default=None, help="path CSV (t,x)")
    est.add_argument("--method", default="log-ratio", choices=["log-ratio", "smoothed", "integrated"])
    est.add_argument("--grid-size", type=int, default=101, help="evaluation points on [0, 1] (local methods)")
    est.add_argument("-o", "--output", default="-")
    est.add_argument("--diagnostics", default=None, help="JSON sidecar path (default: <output>.json or stderr)")

    tst = sub.add_parser("test", help="CUSUM or goodness-of-fit test")
    tstsub = tst.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for name in ("constancy", "gof"):
        t = tstsub.add_parser(name)
        _common(t)
        _estimator_flags(t)
        t.add_argument("--input", default=None, help="path CSV (t,x)")
        t.add_argument("--alpha", type=float, default=0.05)
        t.add_argument("--mc-reps", type=int, default=2000)
        t.add_argument("--mc-grid", type=int, default=512)
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--tau2-form", default="lrv", choices=["lrv", "printed"])
        t.add_argument("--no-continuity-correction", action="store_true")
        t.add_argument("--json", default=None, help="write the full report here")
        if name == "gof":
            t.add_argument("--class", dest="fclass", default="constant", choices=["singleton", "constant", "linear"])
            t.add_argument("--null-hurst", type=float, default=None, help="constant H for --class singleton")
            t.add_argument("--null-file", default=None, help="JSON/YAML with h_samples for --class singleton")
            t.add_argument("--linear-method", default="grid", choices=["grid", "lp"])

    st = sub.add_parser("study", help="rate or level/power simulation study")
    stsub = st.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for name in ("rate", "level-power"):
        s = stsub.add_parser(name)
        _common(s)
        s.add_argument("--output-dir", default=None)
        s.add_argument("--n-list", type=int, nargs="+", default=None)
        s.add_argument("--replications", type=int, default=None)
        s.add_argument("--seed", type=int, default=None)

    fm = sub.add_parser("fracmath", help="closed-form quantities")
    fmsub = fm.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    tau = fmsub.add_parser("tau2")
    _common(tau)
    tau.add_argument("--hurst", type=float, default=None, nargs="+")
    tau.add_argument("--form", default="both", choices=["printed", "lrv", "both"])
    tau.add_argument("--h-max", type=int, default=1000)
    tau.add_argument("--tail-tol", type=float, default=1e-10)
    return ap


def _apply_config(parser: argparse.ArgumentParser, argv):
    """Parse once to find the sub-parser and --config, then re-parse with file defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    if args.command == "study":
        return args  # study configs are ExperimentConfig files, handled there
    data = load_config_file(args.config)
    leaf = _leaf_parser(parser, args)
    dests = {a.dest for a in leaf._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        dest = {"class": "fclass"}.get(dest, dest)
        if dest not in dests:
            raise ConfigError(f"{args.config}: unknown key {key!r}")
        defaults[dest] = value
    leaf.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args):
    # required flags are checked after config defaults have been merged
    if getattr(args, "input", "") is None:
        raise ConfigError("--input is required")
    if args.command == "fracmath" and not args.hurst:
        raise ConfigError("--hurst is required")


def _leaf_parser(parser, args):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    p = sub.choices[args.command]
    kind = getattr(args, "kind", None)
    if kind is not None:
        inner = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = inner.choices[kind]
    return p


def _params(args) -> EstimatorParams:
    return EstimatorParams(kernel=Kernel(args.kernel), bandwidth=args.bandwidth, bandwidth_const=args.bandwidth_const,
                           eta=args.eta, degree=args.degree, epsilon_floor=args.epsilon_floor, lag=args.lag,
                           integrated_degree=args.integrated_degree)


def _open_out(dest):
    return sys.stdout if dest == "-" else open(dest, "w", newline="")


def _write_json(obj, dest):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"
    if dest == "-":
        sys.stderr.write(text)
    else:
        Path(dest).write_text(text)


def _default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _cmd_simulate(args):
    if args.kind == "fbm":
        path = simulate_fbm(FbmConfig(H=args.hurst, sigma=args.sigma_value, n=args.n, lead_in=args.lead_in,
                                      seed=args.seed))
    else:
        fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
        ecfg = ExperimentConfig(**{k: v for k, v in vars(args).items() if k in fields and k != "threads"},
                                n_list=(max(args.n, 256),))
        cfg = MbmConfig(theta=scenario_theta(ecfg), n=args.n, lead_in=args.lead_in, past_horizon=args.past_horizon,
                        m_sub=args.m_sub, variant=args.variant, seed=args.seed)
        if args.diagnostics:
            _write_json(mbm_diagnostics(cfg), args.diagnostics)
        path = simulate_mbm(cfg)
    fh = _open_out(args.output)
    try:
        write_path_csv(path, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _cmd_estimate(args):
    params = _params(args)
    inc = increments(read_path_csv(args.input))
    if args.method == "integrated":
        curve = integrated_hurst(inc, params.left_sided())
        u, values, diag = curve.u, curve.values, dict(curve.diagnostics, start=curve.start, origin=curve.origin)
    else:
        grid = np.linspace(0.0, 1.0, args.grid_size)
        fn = hurst_log_ratio if args.method == "log-ratio" else hurst_smoothed_log
        curve = fn(inc, params, grid)
        u, values, diag = curve.u, curve.values, dict(curve.diagnostics)
    fh = _open_out(args.output)
    try:
        fh.write("u,value\n")
        for a, b in zip(u, values):
            fh.write(f"{a:.12g},{float(b)!r}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    sidecar = args.diagnostics or ("-" if args.output == "-" else str(Path(args.output).with_suffix(".json")))
    _write_json({"method": args.method, "n": inc.n, **diag}, sidecar)
    return EXIT_OK


def _cmd_test(args):
    params = _params(args)
    path = read_path_csv(args.input)
    mc = MCSettings(reps=args.mc_reps, grid_size=args.mc_grid, seed=args.seed,
                    continuity_correction=not args.no_continuity_correction)
    if args.kind == "constancy":
        rep = test_constancy(path, params, args.alpha, mc, form=args.tau2_form)
    else:
        if args.fclass == "singleton":
            if args.null_file:
                cls = FunctionClass.singleton(load_config_file(args.null_file)["h_samples"])
            elif args.null_hurst is not None:
                h = args.null_hurst
                cls = FunctionClass.singleton(lambda v: np.full(np.shape(v), h))
            else:
                raise ConfigError("--class singleton needs --null-hurst or --null-file")
        elif args.fclass == "constant":
            cls = FunctionClass.constant_family()
        else:
            cls = FunctionClass.linear_family()
        rep = test_gof(path, cls, params, args.alpha, mc, form=args.tau2_form, linear_method=args.linear_method)
    print(rep.summary())
    if args.json:
        Path(args.json).write_text(rep.to_json(indent=2) + "\n")
    else:
        print(rep.to_json())
    return EXIT_OK


def _cmd_study(args):
    try:
        data = load_config_file(args.config) if args.config else {}
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    if args.config and data.get("theta_file") and not Path(data["theta_file"]).is_absolute():
        # relative theta files live next to the config that names them
        data["theta_file"] = str(Path(args.config).parent / data["theta_file"])
    for key in ("output_dir", "n_list", "replications", "seed"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    data["threads"] = args.threads
    if args.kind == "level-power" and "test" not in data:
        data["test"] = "cusum"
    cfg = ExperimentConfig.from_dict(data)
    table = run_rate_study(cfg) if args.kind == "rate" else run_test_study(cfg)
    sys.stdout.write(table.summary_csv())
    failures = sum(r["status"] != "ok" for r in table.rows)
    if failures:
        print(f"{failures} replication(s) failed; see the error column", file=sys.stderr)
    return EXIT_OK


def _cmd_fracmath(args):
    cfg = AsymVarConfig(h_max=args.h_max, tail_tol=args.tail_tol)
    print("hurst,tau2_printed,tau2_lrv" if args.form == "both" else f"hurst,tau2_{args.form}")
    for h in args.hurst:
        cols = []
        if args.form in ("printed", "both"):
            cols.append(repr(tau_squared(h, cfg)))
        if args.form in ("lrv", "both"):
            cols.append(repr(tau_squared_lrv(h, cfg)))
        print(",".join([f"{h:g}"] + cols))
    return EXIT_OK


_COMMANDS = {"simulate": _cmd_simulate, "estimate": _cmd_estimate, "test": _cmd_test, "study": _cmd_study,
             "fracmath": _cmd_fracmath}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _require(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        print(f"mbmhurst: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("mbmhurst: configuration error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"mbmhurst: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"mbmhurst: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
