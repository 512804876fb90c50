"""``fpplab`` command line: bounds, run, verify, plot.

Exit codes: 0 success, 1 invariant failure, 2 config error, 3 resource refusal.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__, bounds
from .config import LabConfig, load_config
from .harness import (
    ConfigError,
    ResourceRefusal,
    run_experiment,
    write_outputs,
)
from .passage import ScheduleError, validate_schedule
from .records import IntegrityError, csv_body, read_artifact, render_artifact, sha256_text
from .svgplot import Chart, Series

log = logging.getLogger("fpplab")

OUT_ENV = "FPPLAB_OUT"
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
OUTPUT_FILES = ("records.jsonl", "summary.json", "per_n.csv", "events.csv", "subsequence.csv")


@dataclass
class CliConfig:
    subcommand: str
    config_path: str | None
    overrides: list[str] = field(default_factory=list)
    output_dir: Path = Path("fpp-out")
    verbosity: int = 0
    threads: int = 1
    records: Path | None = None
    full: bool = False


def fmt(v: float | int | str) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer() and abs(v) < 1e15):
        return str(int(v)) if not isinstance(v, bool) else str(v).lower()
    if not math.isfinite(v):
        return str(v)
    if v != 0 and abs(v) < 1e-4:
        return f"{v:.6e}"
    return f"{v:.6f}".rstrip("0").rstrip(".")


def _lab(cli: CliConfig) -> LabConfig:
    return load_config(cli.config_path, cli.overrides)


def cmd_bounds(cli: CliConfig, out=sys.stdout) -> int:
    lab = _lab(cli)
    cfg = lab.experiment
    report_v = validate_schedule(cfg.schedule, cfg.d, cfg.eta)
    alpha = None if cfg.alpha == "auto" else float(cfg.alpha)
    box_factor = None if cfg.box_factor == "auto" else float(cfg.box_factor)
    report = bounds.bound_report(cfg.schedule, cfg.d, cfg.eta, alpha, box_factor,
                                 lab.bound_n_values)
    lines = [f"# fpplab {__version__} bounds; overrides: {lab.overrides or 'none'}"]
    for k, v in report.fields().items():
        lines.append(f"{k} = {fmt(v)}")
    lines.append(f"box_factor_auto = {fmt(8 * cfg.schedule.mean_sup() / report.chernoff.beta1)}")
    lines.append(f"moment_order = {fmt(report_v.moment_order)}")
    lines.append(f"moment_sup = {fmt(report_v.moment_sup)}")
    lines.append(f"schedule_valid = {'yes' if report_v.ok else 'no: ' + '; '.join(report_v.problems)}")
    for name, ok in report.checks().items():
        lines.append(f"check[{name}] = {'satisfied' if ok else 'VIOLATED'}")
    for row in report.curves:
        lines.append("curve[n={}] = ".format(row["n"])
                     + ", ".join(f"{k}={fmt(v)}" for k, v in row.items() if k != "n"))
    record = {k: v for k, v in report.fields().items()}
    record["curves"] = report.curves
    lines.append("record = " + json.dumps(record, sort_keys=True))
    text = "\n".join(lines) + "\n"
    out.write(text)
    cli.output_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config": cfg.as_dict(), "config_digest": cfg.digest(), "overrides": lab.overrides}
    (cli.output_dir / "bounds.txt").write_text(render_artifact("bounds", meta, text),
                                                encoding="utf-8")
    return EXIT_OK if all(report.checks().values()) and report_v.ok else EXIT_INVARIANT


def cmd_run(cli: CliConfig, out=sys.stdout) -> int:
    lab = _lab(cli)
    cfg = lab.experiment
    result = run_experiment(cfg, threads=cli.threads)
    try:
        paths = write_outputs(result, cli.output_dir)
        _, body = read_artifact(paths["records.jsonl"], "records")
    except BaseException:
        for name in OUTPUT_FILES:
            (cli.output_dir / name).unlink(missing_ok=True)
        raise
    s = result.summary
    margin = min(min(e.an_margin, e.gn_margin) for e in s.events)
    out.write(f"# fpplab {__version__} run; config {cfg.digest()}; overrides: "
              f"{lab.overrides or 'none'}\n")
    out.write(f"alpha = {fmt(result.resolved.alpha)}\n")
    out.write(f"beta1 = {fmt(result.resolved.beta1)}\n")
    out.write(f"box_factor = {fmt(result.resolved.box_factor)}\n")
    out.write(f"mu_hat = {s.mu_fekete:.6f}\n")
    out.write("variance_slope = " + (f"{s.fit.slope:.6f} [{s.fit.slope_lo:.6f}, "
                                     f"{s.fit.slope_hi:.6f}]" if s.fit else "n/a") + "\n")
    out.write(f"worst_event_margin = {fmt(margin)}\n")
    out.write(f"coupling_violations = {sum(x.coupling_violations for x in s.per_n)}\n")
    out.write(f"records_sha256 = {sha256_text(body)}\n")
    out.write(f"outputs = {cli.output_dir}\n")
    return EXIT_OK


def cmd_verify(cli: CliConfig, out=sys.stdout) -> int:
    from .verify import run_suite

    lab = _lab(cli)
    checks = run_suite(lab.experiment, quick=not cli.full, record_file=cli.records,
                       threads=cli.threads)
    for c in checks:
        out.write(c.line() + "\n")
    failed = [c for c in checks if not c.passed]
    out.write(f"{len(checks) - len(failed)}/{len(checks)} checks passed\n")
    return EXIT_INVARIANT if failed else EXIT_OK


def _variance_chart(rows: list[dict], fit: dict | None) -> tuple[Chart, str]:
    ns = [float(r["n"]) for r in rows]
    var = [float(r["var_T"]) for r in rows]
    chart = Chart("Variance of T(0,n)", "n", "var T", logx=True, logy=True)
    degenerate = all(v == 0 for v in var)
    anchor = next((v for v in var if v > 0), 1.0)
    ref = [anchor * (n / ns[0]) ** 1.5 for n in ns]
    fitted = ([math.exp(fit["intercept"]) * n ** fit["slope"] for n in ns] if fit
              else [math.nan] * len(ns))
    if degenerate:
        chart.notes.append("degenerate: zero variance")
        chart.logy = False
    else:
        chart.add(Series("sample variance", ns, var, kind="points"))
        if fit:
            chart.add(Series(f"fit slope {fit['slope']:.3f}", ns, fitted, css_class="fit",
                             attrs={"data-slope": repr(fit["slope"])}))
        chart.add(Series("reference n^1.5", ns, ref, css_class="reference",
                         attrs={"data-slope": "1.5"}))
    table = csv_body(["n", "var_T", "var_T_se", "fit", "reference_slope_1_5"],
                     ([int(n), v, float(r["var_T_se"]), f, rf]
                      for n, v, r, f, rf in zip(ns, var, rows, fitted, ref)))
    return chart, table


def _time_constant_chart(rows: list[dict], mu: float) -> tuple[Chart, str]:
    ns = [float(r["n"]) for r in rows]
    ratio = [float(r["mean_T"]) / n for r, n in zip(rows, ns)]
    se = [float(r["mean_T_se"]) / n for r, n in zip(rows, ns)]
    chart = Chart("mean T(0,n) / n", "n", "mean T / n", logx=True)
    chart.add(Series("mean T/n", ns, ratio, kind="points"))
    chart.add(Series(f"mu_hat = {mu:.4f}", ns, [mu] * len(ns), css_class="mu"))
    table = csv_body(["n", "mean_T_over_n", "se", "mu_hat"],
                     ([int(n), r, e, mu] for n, r, e in zip(ns, ratio, se)))
    return chart, table


def _event_chart(events: list[dict]) -> tuple[Chart, str]:
    ns = [float(e["n"]) for e in events]
    chart = Chart("Event frequencies vs closed-form bounds", "n", "probability", logx=True)
    for key, label in (("an_fail", "freq A_n^c"), ("an_bound", "bound A_n^c"),
                       ("gn_fail", "freq G_n^c"), ("gn_bound", "bound G_n^c")):
        ys = [min(float(e[key]), 1.0) for e in events]
        chart.add(Series(label, ns, ys, kind="points" if "fail" in key else "line"))
    cols = ["n", "an_fail", "an_se", "an_bound", "gn_fail", "gn_se", "gn_bound"]
    table = csv_body(cols, ([e[c] for c in cols] for e in events))
    return chart, table


def cmd_plot(cli: CliConfig, out=sys.stdout) -> int:
    src = cli.output_dir / "summary.json"
    if not src.exists():
        raise FileNotFoundError(f"no summary at {src}; run `fpplab run` first")
    header, body = read_artifact(src, "summary")
    summary = json.loads(body)
    meta = {k: header[k] for k in ("config", "config_digest", "resolved") if k in header}
    rows = summary["per_n"]
    produced = []
    for name, (chart, table) in {
        "variance": _variance_chart(rows, summary["variance_fit"]),
        "time_constant": _time_constant_chart(rows, summary["mu_fekete"]),
        "events": _event_chart(summary["events"]),
    }.items():
        (cli.output_dir / f"{name}.svg").write_text(chart.render(), encoding="utf-8")
        (cli.output_dir / f"{name}.csv").write_text(render_artifact("plot-data", meta, table),
                                                    encoding="utf-8")
        produced.append(name)
        if chart.notes:
            out.write(f"{name}: {'; '.join(chart.notes)}\n")
    out.write(f"wrote {', '.join(p + '.svg/.csv' for p in produced)} to {cli.output_dir}\n")
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "run": cmd_run, "verify": cmd_verify, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment config")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides", help="override a config key (repeatable)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (env {OUT_ENV})")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes, 0 = one per CPU")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="count", default=0)

    parser = argparse.ArgumentParser(prog="fpplab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fpplab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("bounds", parents=[common], help="derive constants and bound curves")
    sub.add_parser("run", parents=[common], help="run the Monte Carlo experiment")
    v = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    v.add_argument("--records", type=Path, help="also check an existing records.jsonl")
    v.add_argument("--full", action="store_true", help="full-size checks instead of quick ones")
    sub.add_parser("plot", parents=[common], help="SVG + CSV plots from a run directory")
    return parser


def parse_cli(argv: Sequence[str] | None = None) -> CliConfig:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"experiment.master_seed={args.seed}")
    out = args.out or os.environ.get(OUT_ENV) or "fpp-out"
    return CliConfig(args.subcommand, args.config, overrides, Path(out),
                     args.verbose - args.quiet, args.threads,
                     getattr(args, "records", None), getattr(args, "full", False))


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    cli = parse_cli(argv)
    logging.basicConfig(level=logging.WARNING - 10 * cli.verbosity,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[cli.subcommand](cli, out)
    except (ConfigError, ScheduleError, bounds.BoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (IntegrityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
