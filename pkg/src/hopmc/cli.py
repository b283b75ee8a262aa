"""Command-line pipeline driver.

Verbs:

* ``simulate``   -- run one hopping model, write its trace CSV + metadata.
* ``measure``    -- discretize one or more traces on shared domains and
  print the aggregate measures; optionally write state-dependent series.
* ``sweep-bins`` -- recompute the measures over a list of bin counts.
* ``report``     -- end-to-end: simulate all models (cached), measure,
  write state series and a JSON summary.

Exit codes: 0 success, 1 usage error, 2 numerical failure.  All outputs are
deterministic; rerunning a command reproduces files byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .discretize import BinningSpec, build_discrete_trace, compute_domains
from .integrator import (
    IntegrationError,
    IntegratorConfig,
    Trace,
    extract_stance_reference,
    load_trace,
)
from .measures import (
    MeasureResult,
    compute_measures,
    mc_mi_state,
    mc_w_state,
    moving_average,
)
from .models import MODEL_NAMES, ReferenceTrajectory, load_config, make_model
from . import integrator

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

_REFERENCE_NAME = "reference_stance.csv"


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; we reserve 2 for
    numerical failures, so remap."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="hopmc", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one hopping model")
    sim.add_argument("--model", required=True, choices=MODEL_NAMES)
    sim.add_argument("--duration", type=float, default=8.0, help="seconds [8.0]")
    sim.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sim.add_argument("--config", type=Path, help="key = value parameter overrides")
    sim.add_argument("--reference", type=Path,
                     help="stance reference CSV for dcmot (else cached/auto)")

    mea = sub.add_parser("measure", help="compute measures over trace files")
    mea.add_argument("traces", nargs="+", type=Path)
    mea.add_argument("--bins", type=int, default=300)
    mea.add_argument("--out", type=Path, default=Path("."))
    mea.add_argument("--state-series", action="store_true",
                     help="write mc_state_<model>.csv files")
    mea.add_argument("--smooth-block", type=int, default=5)

    swe = sub.add_parser("sweep-bins", help="measures vs. bin count")
    swe.add_argument("traces", nargs="+", type=Path)
    swe.add_argument("--bins", required=True,
                     help="comma-separated bin counts (at least two)")
    swe.add_argument("--out", type=Path, default=Path("."))

    rep = sub.add_parser("report", help="full pipeline over all models")
    rep.add_argument("--out", type=Path, default=Path("."))
    rep.add_argument("--duration", type=float, default=8.0)
    rep.add_argument("--bins", type=int, default=300)
    rep.add_argument("--config", type=Path)
    rep.add_argument("--state-series", action="store_true")
    rep.add_argument("--smooth-block", type=int, default=5)
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _trace_path(out: Path, model: str) -> Path:
    return out / f"trace_{model}.csv"


def _simulate_model(model_name: str, out: Path, duration: float,
                    overrides: dict | None, reference_path: Path | None) -> Trace:
    """Simulate one model, resolving the dcmot reference dependency."""
    reference = None
    if model_name == "dcmot":
        reference = _resolve_reference(out, reference_path)
    model = make_model(model_name, overrides, reference=reference)
    cfg = IntegratorConfig(t_end=duration)
    return integrator.integrate(model, cfg)


def _resolve_reference(out: Path, reference_path: Path | None) -> ReferenceTrajectory:
    """Explicit file > cached file > extraction from a (cached or fresh)
    default-parameter musfib run."""
    if reference_path is not None:
        return ReferenceTrajectory.from_csv(reference_path)
    cached = out / _REFERENCE_NAME
    if cached.exists():
        return ReferenceTrajectory.from_csv(cached)
    musfib_csv = _trace_path(out, "musfib")
    if musfib_csv.exists():
        trace = load_trace(musfib_csv)
    else:
        print("no stance reference cached; simulating musfib first", file=sys.stderr)
        trace = _simulate_model("musfib", out, 8.0, None, None)
        trace.save(musfib_csv)
    reference = extract_stance_reference(trace)
    reference.to_csv(cached)
    meta = {"source_trace": musfib_csv.name, "source_trace_sha256": _sha256(musfib_csv)}
    integrator.meta_path(cached).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return reference


def cmd_simulate(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    overrides = load_config(args.config) if args.config else None
    trace = _simulate_model(args.model, args.out, args.duration, overrides,
                            args.reference)
    path = trace.save(_trace_path(args.out, args.model))
    print(f"wrote {path} ({len(trace)} rows, "
          f"max height after transient: "
          f"{trace.meta['max_height_post_transient']:.4f} m)")
    return EXIT_OK


def _load_traces(paths) -> list[Trace]:
    traces = [load_trace(p) for p in paths]
    names = [t.model for t in traces]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate model names in inputs: {names}")
    return traces


def _measure_all(traces: list[Trace], bins: int) -> list[MeasureResult]:
    spec = compute_domains(traces, bins=bins)
    return [compute_measures(build_discrete_trace(t, spec)) for t in traces]


_TABLE_ROWS = [
    ("MC_W", "mc_w"),
    ("MC_MI", "mc_mi"),
    ("H(W')", "h_wnext"),
    ("H(W'|W)", "h_wnext_given_w"),
    ("H(A)", "h_a"),
    ("H(A|S)", "h_a_given_s"),
    ("I(W';A|W)", "i_wnext_a_given_w"),
    ("H(A|W')", "h_a_given_wnext"),
    ("MC_W-MC_MI-H(A|W')", "residual"),
]


def _print_table(results: list[MeasureResult], bins: int) -> None:
    print(f"# measures over {len(results)} trace(s), bins={bins}")
    header = f"{'quantity [bits]':<22}" + "".join(f"{r.model:>12}" for r in results)
    print(header)
    for label, attr in _TABLE_ROWS:
        cells = "".join(f"{getattr(r, attr):>12.4f}" for r in results)
        print(f"{label:<22}{cells}")


def _write_state_series(trace: Trace, spec: BinningSpec, out: Path,
                        smooth_block: int) -> Path:
    d = build_discrete_trace(trace, spec)
    w_series = mc_w_state(d)
    mi_series = mc_mi_state(d)
    w_smooth = moving_average(w_series, smooth_block)
    mi_smooth = moving_average(mi_series, smooth_block)
    path = out / f"mc_state_{trace.model}.csv"
    lines = ["t,mc_w,mc_mi,mc_w_smooth,mc_mi_smooth,y,contact"]
    for i in range(len(d)):
        cells = [format(v, ".17g") for v in
                 (d.t[i], w_series[i], mi_series[i], w_smooth[i], mi_smooth[i], d.y[i])]
        cells.append("1" if d.contact[i] else "0")
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_measure(args) -> int:
    if args.smooth_block < 1 or args.smooth_block % 2 == 0:
        raise ValueError(f"--smooth-block must be odd, got {args.smooth_block}")
    traces = _load_traces(args.traces)
    results = _measure_all(traces, args.bins)
    _print_table(results, args.bins)
    if args.state_series:
        args.out.mkdir(parents=True, exist_ok=True)
        spec = compute_domains(traces, bins=args.bins)
        for trace in traces:
            path = _write_state_series(trace, spec, args.out, args.smooth_block)
            print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep_bins(args) -> int:
    try:
        bin_list = [int(b) for b in args.bins.split(",") if b.strip()]
    except ValueError:
        raise ValueError(f"invalid bin list {args.bins!r}") from None
    if len(bin_list) < 2:
        raise ValueError("sweep needs at least two bin counts")
    traces = _load_traces(args.traces)
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["model,bins,mc_w,mc_mi"]
    print(f"{'model':<10}{'bins':>6}{'mc_w':>12}{'mc_mi':>12}")
    for bins in bin_list:
        for res in _measure_all(traces, bins):
            lines.append(f"{res.model},{bins},"
                         f"{format(res.mc_w, '.17g')},{format(res.mc_mi, '.17g')}")
            print(f"{res.model:<10}{bins:>6}{res.mc_w:>12.4f}{res.mc_mi:>12.4f}")
    path = args.out / "measures_vs_bins.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.smooth_block < 1 or args.smooth_block % 2 == 0:
        raise ValueError(f"--smooth-block must be odd, got {args.smooth_block}")
    args.out.mkdir(parents=True, exist_ok=True)
    overrides = load_config(args.config) if args.config else None
    traces = []
    for name in MODEL_NAMES:
        path = _trace_path(args.out, name)
        if path.exists():
            print(f"using cached {path}")
            traces.append(load_trace(path))
            continue
        trace = _simulate_model(name, args.out, args.duration, overrides, None)
        trace.save(path)
        print(f"wrote {path} (max height after transient: "
              f"{trace.meta['max_height_post_transient']:.4f} m)")
        traces.append(trace)

    results = _measure_all(traces, args.bins)
    _print_table(results, args.bins)
    spec = compute_domains(traces, bins=args.bins)
    spec.save(args.out / "binning_spec.txt")
    if args.state_series:
        for trace in traces:
            path = _write_state_series(trace, spec, args.out, args.smooth_block)
            print(f"wrote {path}")
    summary = {
        "bins": args.bins,
        "series_window": "full run including the initial transient",
        "models": {r.model: {attr: getattr(r, attr) for _, attr in _TABLE_ROWS}
                   for r in results},
    }
    (args.out / "measures.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out / 'measures.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "measure": cmd_measure,
        "sweep-bins": cmd_sweep_bins,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except IntegrationError as exc:
        print(f"hopmc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"hopmc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
