"""Command-line driver: spectrum, predict, regime, simulate, scan."""
import argparse
from dataclasses import dataclass, field
import math
import os
import sys
from typing import Optional

import numpy as np

from . import eigenframework as ef
from . import io
from . import presets as ps
from . import regimes as rg
from . import simulator as sim
from .spectrum import DEFAULT_TAIL_TOL, SpectrumSpec, build_spectrum

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
FORMATS = ("csv", "json", "both")
COMMANDS = ("spectrum", "predict", "regime", "simulate", "scan")


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One command invocation; ``params`` keys are flag names with underscores."""

    command: str
    params: dict = field(default_factory=dict)
    out: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in FORMATS:
            raise UsageError(f"format must be one of {FORMATS}")

    def to_dict(self):
        return {"command": self.command, "params": dict(self.params), "out": self.out,
                "format": self.format}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"command", "params", "out", "format"}
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        return cls(d["command"], dict(d.get("params", {})), d.get("out"), d.get("format", "json"))

    def dumps(self) -> str:
        return io.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(io.loads(text))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


_SCHEDULES = ("inverse_log", "log", "power", "critical", "fixed")


def _common(p):
    p.add_argument("--config", help="JSON experiment config; flags override its params")
    p.add_argument("--save-config", help="write the resolved config to this path")
    p.add_argument("--out", help="output path; stdout when omitted")
    p.add_argument("--format", choices=FORMATS)


def _bandwidth(p):
    p.add_argument("--schedule", choices=_SCHEDULES)
    p.add_argument("--c", type=float)
    p.add_argument("--p", type=float)


def build_parser():
    parser = _Parser(prog="krr-overfit", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("spectrum", help="truncated Gaussian spectrum on the sphere")
    p.add_argument("--d", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--tail-tol", type=float)
    _common(p)

    p = sub.add_parser("predict", help="eigenframework risk prediction")
    p.add_argument("--d", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--target", help="zero | constant:c | linear:c")
    p.add_argument("--delta", type=float)
    _common(p)

    p = sub.add_parser("regime", help="theorem case, assumptions and bounds at one point")
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    _bandwidth(p)
    p.add_argument("--target")
    p.add_argument("--sigma-sq", type=float)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo risk of the interpolant")
    p.add_argument("--preset", choices=sorted(ps.SIMULATE_PRESETS))
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int, nargs="+")
    _bandwidth(p)
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--target", help="constant:c | linear:c")
    p.add_argument("--n-trials", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int)
    _common(p)

    p = sub.add_parser("scan", help="predictions and bounds along a schedule")
    p.add_argument("--preset", choices=sorted(ps.SCAN_PRESETS))
    p.add_argument("--l-max", type=int)
    _bandwidth(p)
    p.add_argument("--d", type=int)
    p.add_argument("--grid", type=int, nargs="+", help="sample sizes for bandwidth schedules")
    p.add_argument("--dimension", choices=("polynomial", "logarithmic", "subpolynomial"))
    p.add_argument("--values", type=int, nargs="+", help="d (or l) values for dimension schedules")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--target")
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--workers", type=int)
    _common(p)
    return parser


_META = ("command", "config", "save_config", "out", "format")


def resolve(argv) -> ExperimentConfig:
    """Parse argv, merging a --config file underneath explicit flags."""
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
    flags = {k: v for k, v in vars(args).items() if k not in _META and v is not None}
    base = ExperimentConfig(args.command)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = ExperimentConfig.loads(fh.read())
        if base.command != args.command:
            raise UsageError(f"config is for {base.command!r}, not {args.command!r}")
    params = {**base.params, **flags}
    cfg = ExperimentConfig(args.command, params, args.out or base.out,
                           args.format or base.format)
    if args.save_config:
        io.write_text(args.save_config, cfg.dumps())
    return cfg


def _need(params, *names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise UsageError("missing required " + ", ".join("--" + n.replace("_", "-") for n in missing))
    return [params[n] for n in names]


def _schedule(params, default=None):
    kind = params.get("schedule", default)
    if kind is None:
        raise UsageError("missing required --schedule")
    return rg.BandwidthSchedule(kind, params.get("c", 1.0), params.get("p", 0.0))


# ---------------------------------------------------------------- commands
def cmd_spectrum(params):
    d, tau, m = _need(params, "d", "tau", "m")
    system = build_spectrum(SpectrumSpec(d, tau), m, params.get("tail_tol", DEFAULT_TAIL_TOL))
    summary = (f"degrees={system.n_degrees} flattened={system.flattened_total} "
               f"trace_partial={io.fmt_float(system.trace_partial)} "
               f"tail_bound={io.fmt_float(system.tail_bound)}")
    return system.to_dict(), None, summary


def cmd_predict(params):
    d, tau, m, s2 = _need(params, "d", "tau", "m", "sigma_sq")
    target = rg.make_target(params.get("target", "zero"), d)
    delta = params.get("delta", 0.0)
    system = ef.gaussian_system(d, tau, m, delta=delta)
    pred = ef.predicted_risk(system, target, s2, m, delta)
    out = {"d": d, "tau": tau, "m": m, "target": target.to_dict(), "delta": delta,
           "prediction": pred.to_dict()}
    if delta == 0:
        br = ef.e0_bracket(system, m)
        out["e0_bracket"] = {"e0": br.e0, "upper": br.upper.value, "lower": br.lower.value,
                             "zhou_lower": br.zhou_lower.value}
    summary = (f"kappa={io.fmt_float(pred.kappa)} E={io.fmt_float(pred.e_factor)} "
               f"total={io.fmt_float(pred.total)}")
    return out, None, summary


def cmd_regime(params):
    d, m, s2 = _need(params, "d", "m", "sigma_sq")
    schedule = _schedule(params)
    case = rg.classify_bandwidth_regime(d, schedule)
    tau = schedule.tau(m, d)
    pt = rg.evaluate_point(d, m, tau, rg.make_target(params.get("target", "zero"), d), s2)
    row = [getattr(pt, c) for c in rg.CSV_COLUMNS[:-1]] + [";".join(pt.flags)]
    out = {"case": case, "form": schedule.form, "schedule": schedule.to_dict(),
           "point": dict(zip(rg.CSV_COLUMNS, row)), "L_m": pt.L_m, "U_m": pt.U_m,
           "error": pt.error}
    summary = f"case={case} tau={io.fmt_float(tau)} total={io.fmt_float(pt.total)}"
    if pt.error:
        summary += f" error={pt.error}"
    return out, (rg.CSV_COLUMNS, [row]), summary


def _sim_target(rule, d):
    name, _, arg = str(rule).partition(":")
    val = float(arg) if arg else 1.0
    if name == "constant":
        return sim.TargetFunction.constant(val)
    if name == "linear":
        u = np.zeros(d)
        u[0] = val
        return sim.TargetFunction.linear(u)
    raise UsageError(f"simulate target must be constant:c or linear:c, got {rule!r}")


def cmd_simulate(params):
    if params.get("preset"):
        p = ps.simulate_preset(params["preset"])
        d, ms, schedule, s2 = p.d, p.ms, p.schedule, p.sigma_sq
        target = sim.TargetFunction.constant(p.target)
        n_trials, n_test, seed = p.n_trials, p.n_test, p.seed
    else:
        d, ms, s2 = _need(params, "d", "m", "sigma_sq")
        schedule = _schedule(params)
        target = _sim_target(params.get("target", "constant:1"), d)
        n_trials, n_test, seed = 32, 500, ps.SEED
    n_trials = params.get("n_trials", n_trials)
    n_test = params.get("n_test", n_test)
    seed = params.get("seed", seed)
    ms = [ms] if isinstance(ms, int) else list(ms)
    records, rows, lines = [], [], []
    for m in ms:
        cfg = sim.SimConfig(d, m, schedule.tau(m, d), s2, target, n_test, n_trials, seed)
        try:
            res = sim.run_experiment(cfg)
        except (sim.ExperimentError, ArithmeticError) as exc:
            err = f"{type(exc).__name__}: {exc}"
            records.append({"config": cfg.to_dict(), "error": err})
            nan = math.nan
            rows.append([m, d, cfg.tau, nan, nan, nan, s2 + target.norm_sq(d), s2, nan])
            lines.append(f"m={m} error={err}")
            continue
        records.append(res.to_dict())
        rows.append(sim.sim_csv_row(res))
        lines.append(f"m={m} mean={io.fmt_float(res.empirical_risk_mean)} "
                     f"stderr={io.fmt_float(res.empirical_risk_stderr)} "
                     f"predicted={io.fmt_float(res.predicted_total)}")
    out = {"preset": params.get("preset"), "schedule": schedule.to_dict(), "results": records}
    return out, (sim.SIM_CSV_COLUMNS, rows), "\n".join(lines)


def cmd_scan(params):
    if params.get("preset"):
        p = ps.scan_preset(params["preset"], params.get("l_max"))
        schedule, target, s2, d, grid, tau = p.schedule, p.target, p.sigma_sq, p.d, p.grid, p.tau
    else:
        if params.get("l_max") is not None:
            raise UsageError("--l-max needs --preset corollary3")
        (s2,) = _need(params, "sigma_sq")
        target = params.get("target", "zero")
        tau = params.get("tau", 1.0)
        if params.get("dimension"):
            (values,) = _need(params, "values")
            schedule = rg.DimensionSchedule(params["dimension"], values, params.get("alpha"))
            d, grid = None, None
        else:
            (d,) = _need(params, "d")
            schedule = _schedule(params)
            grid = params.get("grid")
    rep = rg.scan(schedule, target, s2, grid=grid, d=d, tau=tau, workers=params.get("workers", 1))
    out = rep.to_dict()
    out["preset"] = params.get("preset")
    summary = (f"classification={rep.classification} points={len(rep.points)} "
               f"violations={len(rep.violations)} slope_total={io.fmt_float(rep.slope_total)}")
    return out, (rg.CSV_COLUMNS, list(rep.csv_rows())), summary


HANDLERS = {"spectrum": cmd_spectrum, "predict": cmd_predict, "regime": cmd_regime,
            "simulate": cmd_simulate, "scan": cmd_scan}


def _paths(out, fmt):
    root, ext = os.path.splitext(out)
    if fmt == "both":
        return {"csv": root + ".csv", "json": root + ".json"}
    return {fmt: out}


def run(cfg: ExperimentConfig, stdout=None):
    stdout = stdout or sys.stdout
    payload, table, summary = HANDLERS[cfg.command](cfg.params)
    texts = {"json": io.dumps(payload)}
    if table is not None:
        texts["csv"] = io.csv_text(*table)
    fmt = cfg.format
    if fmt != "json" and table is None:
        raise UsageError(f"{cfg.command} has no CSV output; use --format json")
    if cfg.out:
        for kind, path in _paths(cfg.out, fmt).items():
            io.write_text(path, texts[kind])
        print(summary, file=stdout)
    else:
        stdout.write(texts["csv" if fmt == "csv" else "json"])
        print(summary, file=sys.stderr)
    return payload


def main(argv=None) -> int:
    try:
        cfg = resolve(sys.argv[1:] if argv is None else argv)
        run(cfg)
    except UsageError as exc:
        print(f"krr-overfit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, MemoryError) as exc:
        print(f"krr-overfit: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, OSError) as exc:
        print(f"krr-overfit: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
