"""Command line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 analysis error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .exceptions import AnalysisError, DataError, GazeQualityError, OracleConfigError
from .ingestion import DatasetManifest, format_number, load_dataset, load_manifest
from .metrics import DROP_THRESHOLD_MS, write_histogram_csv
from .oracle import (
    OracleConfig,
    generate_grid_recording,
    generate_saccades_recording,
    with_seed,
    write_oracle_recording,
)
from .pipeline import CONDITIONS, AnalysisOptions, analyze
from .preprocessing import DEFAULT_TOLERANCE_FACTOR, ErrorProfile, write_error_profile_csv

log = logging.getLogger("gazequality")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ANALYSIS = 0, 1, 2, 3

REPORT_FILE = "report.json"
INTERMEDIATES_FILE = "intermediates.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_digests(manifest: DatasetManifest) -> dict:
    out = {}
    for e in manifest.entries:
        key = f"{e.subject_id}/{e.task.value}"
        try:
            out[key] = {"samples": _sha256(e.samples), "targets": _sha256(e.targets)}
        except OSError as exc:
            raise DataError(f"missing file: {exc.filename}") from None
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _tables(report: dict) -> dict[str, str]:
    acc_rows, prec_rows, lin_rows, xt_rows = [], [], [], []
    for cond in CONDITIONS:
        c = report["conditions"][cond]
        if c.get("computable") is False:
            continue
        for d in ("H", "V", "C"):
            a = c["accuracy"][d]
            acc_rows.append([cond, d, a["median"], a["p75"], a["p90"], a["mean"]])
            p = c["precision"][d]
            if p.get("computable") is not False:
                prec_rows.append([cond, d, p["median"], p["p75"], p["p90"], p["mean"]])
        for d in ("H", "V"):
            lin = c["linearity"][d]
            if lin.get("computable") is not False:
                lin_rows.append([cond, d, lin["mean_slope"], lin["sd_slope"], lin["ci95"][0], lin["ci95"][1],
                                 int(lin["significantly_nonideal"])])
            xt = c["crosstalk"][d]
            if xt.get("computable") is not False:
                coefs = xt["coefficients"] + [None] * (3 - len(xt["coefficients"]))
                pvals = xt["p_values"] + [None] * (3 - len(xt["p_values"]))
                xt_rows.append([cond, d, xt["kind"], *["" if v is None else float(v) for v in coefs + pvals]])
    t = report["temporal"]["pooled"]
    return {
        "table_accuracy.csv": _csv_text(["condition", "dimension", "median", "p75", "p90", "mean"], acc_rows),
        "table_precision.csv": _csv_text(["condition", "dimension", "median_rms", "p75_rms", "p90_rms", "mean_sd"], prec_rows),
        "table_linearity.csv": _csv_text(
            ["condition", "dimension", "mean_slope", "sd_slope", "ci95_low", "ci95_high", "significantly_nonideal"], lin_rows
        ),
        "table_crosstalk.csv": _csv_text(
            ["condition", "error_dimension", "kind", "intercept", "linear", "quadratic", "p_intercept", "p_linear", "p_quadratic"],
            xt_rows,
        ),
        "table_temporal.csv": _csv_text(
            ["n_samples", "mean_isi_ms", "sd_isi_ms", "dropped_count", "dropped_fraction"],
            [[t["n_samples"], t["mean_isi_ms"], t["sd_isi_ms"], t["dropped_count"], t["dropped_fraction"]]],
        ),
    }


def cmd_analyze(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    loaded = load_dataset(manifest)
    options = AnalysisOptions(
        window=args.window,
        tolerance_factor=args.tolerance_factor,
        recalibrate=args.recalibrate,
        drop_threshold_ms=args.drop_threshold_ms,
        alpha=args.alpha,
        pooled_mean=args.pooled_mean,
    )
    dataset_id = args.dataset_id or manifest_path.stem
    result = analyze(loaded, options, dataset_id=dataset_id, inputs=_input_digests(manifest))
    report = result.report
    if args.timestamp:
        report["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()

    files = {REPORT_FILE: _dumps(report), INTERMEDIATES_FILE: _dumps(result.intermediates)}
    files.update(_tables(report))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    inc, exc = report["subjects"]["included"], report["subjects"]["excluded"]
    log.info("analysed %d subject(s), excluded %d; report in %s", len(inc), len(exc), out / REPORT_FILE)
    return EXIT_OK


def _load_oracle_config(path: str | None) -> tuple[OracleConfig, list[int], bool]:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise OracleConfigError(f"{path}: invalid JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise OracleConfigError(f"{path}: config must be a JSON object")
    raw = dict(raw)
    seeds = raw.pop("seeds", None)
    grid = raw.pop("grid", True)
    config = OracleConfig.from_dict(raw)
    if seeds is None:
        seeds = [config.seed]
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds) or len(set(seeds)) != len(seeds):
        raise OracleConfigError("seeds must be a list of distinct integers")
    if len(seeds) > 1 and config.subject_id is not None:
        raise OracleConfigError("subject_id cannot be combined with several seeds")
    config.validate()
    return config, seeds, bool(grid)


def cmd_generate(args) -> int:
    config, seeds, grid = _load_oracle_config(args.config)
    out = Path(args.output)
    entries = []
    for seed in seeds:
        c = with_seed(config, seed)
        entries.append(write_oracle_recording(*generate_saccades_recording(c), out))
        if grid:
            entries.append(write_oracle_recording(*generate_grid_recording(c), out))
    manifest = DatasetManifest(tuple(entries))
    (out / "manifest.json").write_text(manifest.to_json(relative_to=out), encoding="utf-8")
    log.info("wrote %d recording(s) and manifest.json to %s", len(entries), out)
    return EXIT_OK


def _scatter_csv(target, observed, fitted=None) -> str:
    header = ["target_deg", "observed_deg"] + (["fitted_deg"] if fitted is not None else [])
    rows = zip(target, observed, fitted) if fitted is not None else zip(target, observed)
    return _csv_text(header, ([float(v) for v in row] for row in rows))


def _poly(coefs, x):
    return sum(c * x**i for i, c in enumerate(coefs))


def cmd_export_figures(args) -> int:
    src = Path(args.analysis_dir)
    try:
        report = json.loads((src / REPORT_FILE).read_text(encoding="utf-8"))
        inter = json.loads((src / INTERMEDIATES_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"missing analysis artifact {exc.filename}; run 'analyze' first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt analysis artifact: {exc.msg}") from None
    out = Path(args.output) if args.output else src / "figures"
    files = {}

    prof = inter["error_profile"]
    profile = ErrorProfile([float("nan") if v is None else v for v in prof["mean_error_deg"]], prof["count"])
    buf = io.StringIO()
    write_error_profile_csv(profile, buf)
    files["error_profile.csv"] = buf.getvalue()

    for cond, data in sorted(inter["conditions"].items()):
        fix = data["fixations"]
        buf = io.StringIO()
        write_histogram_csv([f["accuracy_c"] for f in fix], buf, args.bin_width)
        files[f"{cond}_accuracy_histogram.csv"] = buf.getvalue()
        buf = io.StringIO()
        write_histogram_csv([f["precision_rms_c"] for f in fix if f["precision_rms_c"] is not None], buf, args.bin_width)
        files[f"{cond}_precision_histogram.csv"] = buf.getvalue()
        for d, sc in sorted(data["linearity_scatter"].items()):
            files[f"{cond}_linearity_{d}.csv"] = _scatter_csv(sc["target_deg"], sc["observed_deg"])
            model = dict(sc["model"] or {"kind": None, "coefficients": [], "p_values": []})
            model["linearity"] = report["conditions"][cond]["linearity"][d]
            files[f"{cond}_linearity_{d}.json"] = _dumps(model)
        for d, sc in sorted(data["crosstalk_scatter"].items()):
            model = report["conditions"][cond]["crosstalk"][d]
            fitted = [_poly(model["coefficients"], x) for x in sc["target_deg"]]
            files[f"{cond}_crosstalk_{d}.csv"] = _scatter_csv(sc["target_deg"], sc["observed_deg"], fitted)
            files[f"{cond}_crosstalk_{d}.json"] = _dumps(
                {"kind": model["kind"], "coefficients": model["coefficients"], "p_values": model["p_values"]}
            )

    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    log.info("wrote %d figure data file(s) to %s", len(files), out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gazequality", description="Eye-tracking signal quality analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyse a dataset manifest and write a quality report")
    a.add_argument("manifest", help="dataset manifest JSON")
    a.add_argument("-o", "--output", required=True, help="output directory")
    a.add_argument("--window", choices=("data_driven", "paper_fixed"), default="data_driven")
    a.add_argument("--recalibrate", action="store_true", help="also report data corrected with each subject's grid task")
    a.add_argument("--drop-threshold-ms", type=float, default=DROP_THRESHOLD_MS)
    a.add_argument("--alpha", type=float, default=0.05, help="significance level for crosstalk model selection")
    a.add_argument("--tolerance-factor", type=float, default=DEFAULT_TOLERANCE_FACTOR)
    a.add_argument("--pooled-mean", action="store_true", help="mean column over all fixations instead of per-subject means")
    a.add_argument("--dataset-id", default=None)
    a.add_argument("--timestamp", action="store_true", help="add a generated_at field (breaks byte-identical reruns)")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("generate", help="write synthetic recordings with known ground truth")
    g.add_argument("output", help="output directory")
    g.add_argument("-c", "--config", default=None, help="oracle config JSON (defaults when omitted)")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("export-figures", help="write plot data from an analysis directory")
    e.add_argument("analysis_dir", help="directory written by 'analyze'")
    e.add_argument("-o", "--output", default=None, help="output directory (default: <analysis_dir>/figures)")
    e.add_argument("--bin-width", type=float, default=0.25, help="histogram bin width in degrees")
    e.set_defaults(func=cmd_export_figures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "bin_width", 1.0) is not None and getattr(args, "bin_width", 1.0) <= 0:
        parser.error("--bin-width must be positive")
    if getattr(args, "tolerance_factor", 1.0) < 1.0:
        parser.error("--tolerance-factor must be at least 1")
    if not 0 < getattr(args, "alpha", 0.5) < 1:
        parser.error("--alpha must lie in (0, 1)")
    try:
        return args.func(args)
    except (DataError, OracleConfigError) as exc:
        print(f"gazequality: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AnalysisError, GazeQualityError) as exc:
        print(f"gazequality: analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
