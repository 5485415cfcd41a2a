"""
Command-line entry point: classify, correlate, simulate, verify.

Every setting lives in one YAML file; `--print-config` shows the effective
configuration (defaults merged with the file and flags) and exits.
"""
import argparse
import csv
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date, time
from decimal import Decimal
from pathlib import Path

import yaml

from .analysis import RegimeSpec, regime_report, write_report
from .ingest import SESSION_SECONDS, TickFormatError, TickRowError, bin_day, parse_ticks, write_ticks
from .oracles import Tolerances, run_checks
from .pipeline import (
    ClassifyConfig,
    DayClass,
    InsufficientDataError,
    SeriesPoint,
    classify_corpus,
    equilibrium_series,
)
from .synth import JumpProcess, VolumeResponse, synth_corpus, write_truth

__all__ = ["RunConfig", "load_config", "build_parser", "main"]

CLASSIFICATION_HEADER = (
    "date", "class", "p0", "p0_source", "C", "omega", "sqrtA", "R2", "F", "R2_crit",
    "significant", "model", "n_bins", "total_volume",
    # diagnostics beyond the core columns
    "stage", "peak_count", "p0_1", "p0_2", "C2", "omega2", "flags",
)
SUMMARY_HEADER = ("class", "count", "percent")
PLOT_HEADER = ("date", "price", "observed", "fitted", "model")


class ConfigError(ValueError):
    pass


@dataclass
class SimulateConfig:
    days: int = 200
    mixture: list = field(default_factory=lambda: [0.70, 0.15, 0.10, 0.05])
    n_ticks: int = 100_000
    rho: float = 0.0
    exact: bool = False
    regimes: list = None
    p0_start: float = 10.0
    return_sd: float = 0.02
    change_sd: float = 0.15
    base_volume: int = 360_000_000
    start: str = "2007-04-02"


@dataclass
class RunConfig:
    input: str = None
    out: str = "out"
    seed: int = 0
    coarse_tick: str = "0.01"
    fine_tick: str = "0.005"
    alpha: float = 0.05
    df_convention: str = "paper"
    gate: str = "adequacy"
    fit_alpha: float = 1e-6
    flat_alpha: float = 0.01
    min_bins: int = 5
    min_bins_two: int = 8
    session_hours: float = SESSION_SECONDS / 3600
    session_window: list = None
    strict_rows: bool = True
    max_iterations: int = 200
    starts: int = 3
    workers: int = 1
    plot_data: bool = True
    regimes: list = field(default_factory=list)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    verify: dict = field(default_factory=lambda: asdict(Tolerances()))

    def classify_config(self):
        return ClassifyConfig(
            coarse_tick=Decimal(str(self.coarse_tick)),
            fine_tick=Decimal(str(self.fine_tick)),
            alpha=self.alpha,
            df_convention=self.df_convention,
            gate=self.gate,
            fit_alpha=self.fit_alpha,
            flat_alpha=self.flat_alpha,
            min_bins=self.min_bins,
            min_bins_two=self.min_bins_two,
            session_seconds=self.session_hours * 3600,
            max_iterations=self.max_iterations,
            starts=self.starts,
        )

    def regime_specs(self):
        out = []
        for i, g in enumerate(self.regimes):
            try:
                out.append(RegimeSpec(str(g["label"]), _as_date(g["start"]), _as_date(g["end"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"regime #{i + 1}: {exc}") from None
        return out

    def tolerances(self):
        return Tolerances(**self.verify)

    def session(self):
        if not self.session_window:
            return None
        lo, hi = self.session_window
        return time.fromisoformat(str(lo)), time.fromisoformat(str(hi))


def _as_date(x):
    return x if isinstance(x, date) else date.fromisoformat(str(x))


def _merge(obj, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        current = getattr(obj, key)
        if isinstance(current, SimulateConfig):
            _merge(current, value or {}, f"{where}.{key}")
        elif key == "verify":
            unknown = set(value or {}) - set(asdict(Tolerances()))
            if unknown:
                raise ConfigError(f"{where}.verify: unknown keys {sorted(unknown)}")
            current.update(value or {})
        else:
            setattr(obj, key, value)


def load_config(path=None):
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        data = yaml.safe_load(p.read_text()) or {}
        _merge(cfg, data, str(p))
    return cfg


def _config_yaml(cfg):
    data = asdict(cfg)
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


# --- output helpers --------------------------------------------------------

def _num(x):
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _classification_row(dc):
    fit = dc.chosen_fit
    c = omega = sqrt_a = c2 = omega2 = None
    p0_1 = p0_2 = None
    r2 = f = r2_crit = None
    model = ""
    if fit is not None:
        model = fit.family
        g = fit.goodness
        r2, f, r2_crit = g.r2, g.f, g.r2_crit
        prm = fit.params
        if fit.family == "bessel":
            c, omega = prm.C, prm.omega
        elif fit.family == "two_bessel":
            c, omega = prm.first.C, prm.first.omega
            c2, omega2 = prm.second.C, prm.second.omega
            p0_1, p0_2 = prm.first.p0, prm.second.p0
        else:
            c, sqrt_a = prm.C, prm.sqrtA
    return [
        dc.day.isoformat(), str(dc.cls), _num(dc.equilibrium_price),
        dc.equilibrium_source or "", _num(c), _num(omega), _num(sqrt_a),
        _num(r2), _num(f), _num(r2_crit),
        "true" if fit is not None and fit.significant else "false",
        model, dc.n_bins, dc.total_volume,
        dc.stage, dc.peak_count, _num(p0_1), _num(p0_2), _num(c2), _num(omega2),
        ";".join(dc.flags),
    ]


def _plot_rows(dc, ticks, cfg):
    if dc.cls is DayClass.DEGENERATE and dc.n_bins == 0:
        return []
    tick = cfg.fine_tick if dc.stage == 2 else cfg.coarse_tick
    dist = bin_day(ticks, tick, cfg.session_seconds)
    fit = dc.chosen_fit
    fitted = fit.predict(dist.prices) if fit is not None else [None] * dist.n_bins
    d = dc.day.isoformat()
    model = fit.family if fit is not None else ""
    return [[d, f"{Decimal(int(m)).scaleb(-3):.3f}", _num(float(p)), _num(None if y is None else float(y)), model]
            for m, p, y in zip(dist.bin_millis, dist.probabilities, fitted)]


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


# --- commands --------------------------------------------------------------

def cmd_classify(cfg):
    if not cfg.input:
        raise ConfigError("classify needs --input (a tick CSV)")
    src = Path(cfg.input)
    if not src.is_file():
        raise ConfigError(f"input not found: {src}")
    errors = []
    with open(src, "rb") as fh:
        days = parse_ticks(fh, strict=cfg.strict_rows, errors=errors, session=cfg.session())
    for e in errors:
        print(f"warning: {src}: skipped {e}", file=sys.stderr)
    if not days:
        raise ConfigError(f"no tick rows in {src}")
    ccfg = cfg.classify_config()
    results, summary = classify_corpus(days, ccfg, workers=cfg.workers)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fh, w = _writer(out / "classification.csv")
    with fh:
        w.writerow(CLASSIFICATION_HEADER)
        for dc in results:
            w.writerow(_classification_row(dc))
    fh, w = _writer(out / "summary.csv")
    with fh:
        w.writerow(SUMMARY_HEADER)
        for name, count, pct in summary.rows():
            w.writerow([name, count, f"{pct:.2f}"])
    if cfg.plot_data:
        fh, w = _writer(out / "plot_data.csv")
        with fh:
            w.writerow(PLOT_HEADER)
            for dc in results:
                w.writerows(_plot_rows(dc, days[dc.day], ccfg))
    for name, count, pct in summary.rows():
        print(f"{name:<22} {count:>6} {pct:>7.2f}")
    return 0


def _read_series(path):
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "class", "p0", "p0_source", "total_volume"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: not a classification CSV (missing {sorted(missing)})")
        rows = sorted(reader, key=lambda r: r["date"])
    gap = False
    for row in rows:
        if row["class"] == str(DayClass.DEGENERATE) or not row["p0"]:
            gap = True
            continue
        points.append(SeriesPoint(date.fromisoformat(row["date"]), float(row["p0"]),
                                  int(row["total_volume"]), row["p0_source"], gap and bool(points)))
        gap = False
    if len(points) < 2:
        raise InsufficientDataError(f"need at least 2 usable days, got {len(points)}")
    return points


def cmd_correlate(cfg):
    if not cfg.input:
        raise ConfigError("correlate needs --input (a classification CSV)")
    src = Path(cfg.input)
    if not src.is_file():
        raise ConfigError(f"input not found: {src}")
    series = _read_series(src)
    report = regime_report(series, cfg.regime_specs(), cfg.alpha)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "regimes.csv", "w", newline="") as fh:
        write_report(report, fh)
    for r in report.rows:
        if r.status == "ok":
            verdict = ">" if r.significant else "<"
            print(f"{r.label:<8} n={r.n:<5} r={r.r:+.4f} (t={r.t:.4f} {verdict} t_crit={r.t_crit:.3f})")
        else:
            print(f"{r.label:<8} n={r.n:<5} {r.status}")
    return 0


def cmd_simulate(cfg):
    s = cfg.simulate
    jump = JumpProcess(p0_start=s.p0_start, return_sd=s.return_sd, tick_size=Decimal(str(cfg.coarse_tick)))
    resp = VolumeResponse(rho=s.rho, change_sd=s.change_sd, base_volume=s.base_volume, exact=s.exact)
    corpus = synth_corpus(s.days, s.mixture, jump, resp, seed=cfg.seed, n_ticks=s.n_ticks,
                          start=_as_date(s.start), regimes=s.regimes)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ticks.csv", "w", newline="") as fh:
        write_ticks(corpus.days(), fh)
    with open(out / "truth.csv", "w", newline="") as fh:
        write_truth(corpus.truth, fh)
    print(f"wrote {len(corpus)} days to {out}")
    return 0


def cmd_verify(cfg):
    checks = run_checks(cfg.tolerances())
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<24} {c.detail}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


COMMANDS = {
    "classify": cmd_classify,
    "correlate": cmd_correlate,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration file")
    common.add_argument("--input", metavar="PATH", help="input file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--tick-size", metavar="X", help="coarse price bin width")
    common.add_argument("--alpha", type=float, help="significance level")
    common.add_argument("--df-convention", choices=("paper", "conventional"))
    common.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    parser = argparse.ArgumentParser(prog="pvwave", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="classify each day of a tick CSV")
    sub.add_parser("correlate", parents=[common], help="regime correlation report from a classification CSV")
    sub.add_parser("simulate", parents=[common], help="write a synthetic tick corpus and its ground truth")
    sub.add_parser("verify", parents=[common], help="run the built-in numerical self-checks")
    return parser


def _apply_flags(cfg, args):
    overrides = {
        "input": args.input,
        "out": args.out,
        "seed": args.seed,
        "coarse_tick": args.tick_size,
        "alpha": args.alpha,
        "df_convention": args.df_convention,
    }
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        if args.print_config:
            sys.stdout.write(_config_yaml(cfg))
            return 0
        # validate the classification settings up front for every command
        cfg.classify_config()
        return COMMANDS[args.command](cfg)
    except (ConfigError, TickFormatError, TickRowError, InsufficientDataError,
            ValueError, OSError) as exc:
        print(f"pvwave {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
