"""Command-line interface: ``frigibbs {synth,reconstruct,experiment,replay,snr}``.

Exit codes: 0 on success, 1 on a runtime failure (with a diagnostic on
stderr), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .annihilator import annihilate_reconstruct
from .errors import FriError
from .experiment import (
    METHODS,
    TruthRule,
    find_spec_file,
    load_spec,
    run_experiment,
    snr_table,
    summarize,
    with_overrides,
)
from .gibbs import GibbsConfig, GibbsState, run_gibbs
from .llse import llse_refine
from .model import (
    AcquisitionConfig,
    FriSignal,
    NoiseSpec,
    add_noise,
    reconstruction_error,
    snr_db,
    synthesize_samples,
)
from .records import export_records, import_records, summary_csv, write_summary, write_trace

log = logging.getLogger("frigibbs")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _num(x: float):
    """JSON-safe float."""
    if x is None:
        return None
    return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    acq = AcquisitionConfig(args.sigma_h, args.T, args.N)
    if args.weights is not None or args.locations is not None:
        if args.weights is None or args.locations is None:
            raise FriError("--weights and --locations must be given together")
        truth = FriSignal(args.weights, args.locations).canonical()
    else:
        rule = TruthRule("random", amplitude=tuple(args.amplitude), min_separation=args.min_separation)
        truth = rule.draw(np.random.default_rng(args.seed), args.K, acq.window)
    z = synthesize_samples(truth, acq).values
    y = add_noise(z, NoiseSpec(args.sigma_e, args.seed)).values

    if args.format == "json":
        doc = {
            "acquisition": {"sigma_h": acq.sigma_h, "T": acq.T, "N": acq.N},
            "truth": {"c": truth.c.tolist(), "t": truth.t.tolist()},
            "noise": {"sigma_e": args.sigma_e, "seed": args.seed},
            "snr_db": _num(snr_db(z, y)),
            "z": z.tolist(),
            "y": y.tolist(),
        }
        text = json.dumps(doc, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "time", "z", "y"])
        for n in range(acq.N):
            w.writerow([n, repr(float(acq.sample_times[n])), repr(float(z[n])), repr(float(y[n]))])
        text = buf.getvalue()
    _emit(text, args.out)
    return 0


# reconstruct ----------------------------------------------------------------

def _load_samples(path: str, sigma_h: float | None):
    """``(y, acq, truth or None)`` from a synth JSON or CSV file."""
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        a = doc["acquisition"]
        acq = AcquisitionConfig(sigma_h or a["sigma_h"], a["T"], a["N"])
        truth = FriSignal(doc["truth"]["c"], doc["truth"]["t"]) if "truth" in doc else None
        return np.asarray(doc["y"], dtype=float), acq, truth
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or "y" not in rows[0] or "time" not in rows[0]:
        raise FriError(f"{path}: expected a synth CSV with time and y columns")
    if sigma_h is None:
        raise FriError("--sigma-h is required for CSV input")
    times = np.array([float(r["time"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    T = float(times[1] - times[0]) if times.size > 1 else 1.0
    return y, AcquisitionConfig(sigma_h, T, y.size), None


def cmd_reconstruct(args) -> int:
    y, acq, truth = _load_samples(args.input, args.sigma_h)
    K = args.K if args.K is not None else (truth.K if truth is not None else None)
    if K is None:
        raise FriError("--K is required when the input carries no ground truth")

    out = {"method": args.method, "K": K, "N": acq.N, "T": acq.T, "sigma_h": acq.sigma_h}
    est = None
    if args.method == "annihilator":
        res = annihilate_reconstruct(y, K, acq)
        out["status"] = res.status
        if res.error:
            out["error"] = res.error
        est = res.signal
    else:
        cfg = GibbsConfig(K, burn_in=args.burn_in, keep=args.keep, seed=args.seed,
                          init=GibbsState.default(K, args.init_sigma_e))
        trace, mmse = run_gibbs(y, acq, cfg, backend=args.backend)
        est = mmse.signal()
        if args.method == "gibbs_llse":
            est = FriSignal(llse_refine(y, est.t, acq), est.t)
        out["status"] = "ok"
        out["sigma_e_estimate"] = mmse.sigma_e
        out["rejection_fallbacks"] = trace.rejection_fallback_count
        if args.trace:
            write_trace(trace, args.trace)
            out["trace_path"] = args.trace

    if est is not None:
        est = est.canonical()
        out["estimate"] = {"c": est.c.tolist(), "t": est.t.tolist()}
    if truth is not None:
        out["E"] = reconstruction_error(est, truth, acq.sigma_h) if est is not None else 1.0

    if args.format == "json":
        text = json.dumps(out, indent=1) + "\n"
    else:
        lines = [f"method: {args.method}", f"status: {out['status']}"]
        if est is not None:
            lines.append("c: " + " ".join(f"{v:.6g}" for v in est.c))
            lines.append("t: " + " ".join(f"{v:.6g}" for v in est.t))
        if "sigma_e_estimate" in out:
            lines.append(f"sigma_e: {out['sigma_e_estimate']:.6g}")
        if "E" in out:
            lines.append(f"E: {out['E']:.6e}")
        if "error" in out:
            lines.append(f"error: {out['error']}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0 if est is not None else 1


# experiment / replay / snr ------------------------------------------------------

def _spec_from_args(args):
    spec = load_spec(find_spec_file(args.spec))
    return with_overrides(spec, master_seed=args.seed, n_seeds=args.n_seeds)


def _print_summary(rows, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(json.dumps([{k: _num(v) if isinstance(v, float) else v
                                      for k, v in r.__dict__.items()} for r in rows], indent=1) + "\n")
    else:
        sys.stdout.write(summary_csv(rows))


def cmd_experiment(args) -> int:
    spec = _spec_from_args(args)
    out_dir = Path(args.out or f"{spec.name}_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = str(out_dir / "traces") if args.traces else None
    records = run_experiment(spec, jobs=args.jobs, trace_dir=trace_dir, backend=args.backend)
    rows = summarize(records, spec.methods)
    export_records(records, out_dir / "records.jsonl")
    write_summary(rows, out_dir / "summary.csv")
    (out_dir / "spec.json").write_text(json.dumps(spec.to_dict(), indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    _print_summary(rows, args.format)
    log.info("wrote %d records to %s", len(records), out_dir)
    return 0


def cmd_replay(args) -> int:
    records = import_records(args.records)
    worst = 0.0
    mismatched = 0
    for r in records:
        E = r.rescore()
        diff = abs(E - r.E)
        worst = max(worst, diff)
        if diff > args.tol * max(1.0, abs(r.E)):
            mismatched += 1
            log.warning("record %s/%s sigma_e=%g N=%d seed=%d: stored E=%r, rescored %r",
                        r.experiment, r.method, r.sigma_e, r.N, r.seed_index, r.E, E)
        r.E = E
    rows = summarize(records)
    if args.out:
        write_summary(rows, args.out)
    _print_summary(rows, args.format)
    print(f"# {len(records)} records rescored, {mismatched} mismatched, max |dE| = {worst:.3g}",
          file=sys.stderr)
    return 1 if mismatched else 0


def cmd_snr(args) -> int:
    spec = _spec_from_args(args)
    table = snr_table(spec)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma_e", "N", "mean_snr_db"])
    for (s, n), v in table.items():
        w.writerow([repr(s), n, "inf" if math.isinf(v) else repr(v)])
    _emit(buf.getvalue(), args.out)
    return 0


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="frigibbs",
        description="Bayesian reconstruction of Dirac streams from Gaussian-filtered samples.",
        epilog="Exit codes: 0 success, 1 runtime failure, 2 usage error.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", help="emit noiseless and noisy samples of a Dirac stream")
    s.add_argument("--K", type=int, default=5)
    s.add_argument("--N", type=int, default=30)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--sigma-h", type=float, default=5.0)
    s.add_argument("--sigma-e", type=float, default=0.0)
    s.add_argument("--weights", type=_floats, help="fixed weights, comma separated")
    s.add_argument("--locations", type=_floats, help="fixed locations, comma separated")
    s.add_argument("--amplitude", type=float, nargs=2, default=(2.0, 6.0), metavar=("LO", "HI"))
    s.add_argument("--min-separation", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output file (default stdout)")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("reconstruct", help="reconstruct one signal from a synth file")
    r.add_argument("input", help="synth JSON or CSV file, '-' for stdin")
    r.add_argument("--method", choices=METHODS, default="gibbs_llse")
    r.add_argument("--K", type=int, help="model order (default: from the input's truth)")
    r.add_argument("--sigma-h", type=float, help="kernel width (required for CSV input)")
    r.add_argument("--burn-in", type=int, default=100)
    r.add_argument("--keep", type=int, default=400)
    r.add_argument("--init-sigma-e", type=float, default=0.01)
    r.add_argument("--seed", type=int, default=0, help="chain seed")
    r.add_argument("--backend", choices=("compiled", "python"))
    r.add_argument("--trace", help="write the chain trace CSV here")
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("experiment", help="run an experiment spec and write records + summary")
    e.add_argument("spec", help="spec file, or the name of a packaged spec (expt_a, expt_b, table1, fig4)")
    e.add_argument("--out", help="output directory (default <name>_out)")
    e.add_argument("--seed", type=int, help="override the master seed")
    e.add_argument("--n-seeds", type=int, help="override the number of seeds")
    e.add_argument("--jobs", type=int, help="worker processes (default $FRIGIBBS_JOBS or 1)")
    e.add_argument("--traces", action="store_true", help="also write one trace CSV per chain")
    e.add_argument("--backend", choices=("compiled", "python"))
    e.add_argument("--format", choices=("csv", "json"), default="csv", help="stdout summary format")
    e.set_defaults(func=cmd_experiment)

    rp = sub.add_parser("replay", help="re-score stored records and rebuild the summary")
    rp.add_argument("records")
    rp.add_argument("--tol", type=float, default=1e-9, help="relative mismatch tolerance")
    rp.add_argument("--out", help="write the rebuilt summary CSV here")
    rp.add_argument("--format", choices=("csv", "json"), default="csv")
    rp.set_defaults(func=cmd_replay)

    sn = sub.add_parser("snr", help="mean SNR per (sigma_e, N) cell of a spec")
    sn.add_argument("spec")
    sn.add_argument("--seed", type=int, help="override the master seed")
    sn.add_argument("--n-seeds", type=int)
    sn.add_argument("--out")
    sn.set_defaults(func=cmd_snr)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FriError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"frigibbs {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
