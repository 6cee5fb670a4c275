"""Command-line entry point: ``ssvepnet {convert,synth,train,eval,infer,bench,full-repro}``.

Exit codes: 0 success, 2 usage error (bad flag, bad config key), 1 runtime failure.

Every command that writes an output directory also writes ``config.json``
there: the effective configuration after merging defaults, the optional
``--config`` JSON file and the command-line flags (flags win).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, NumericContractError, ParameterError

DEFAULTS = {
    # data and outputs
    "data": None,
    "out": None,
    "checkpoints": None,
    # preprocessing
    "filter_low_hz": 6.0,
    "filter_high_hz": 90.0,
    "filter_order": 4,
    # training
    "lr": 1e-3,
    "batch_size": 64,
    "max_epochs": 100,
    "patience": 15,
    "seed": 0,
    "p_remix": 0.5,
    "window_s": 1.0,
    "onset_s": 0.14,
    "use_asdm": True,
    "use_augment": True,
    "beta1": 0.9,
    "beta2": 0.999,
    "val_fraction": 0.1,
    "subjects_limit": None,
    "jobs": None,
    # network
    "temporal_kernel": 25,
    "temporal_filters": 16,
    "spatial_filters": 16,
    "pool": 4,
    "hidden": [128, 64],
    "elu_alpha": 1.0,
    "tau": 0.05,
    "cada_gate_init": 0.95,
    # baselines and evaluation
    "methods": ["ours"],
    "harmonics": 5,
    "wilcoxon": False,
    "bench_samples": 240,
}

METHODS = ("ours", "cca", "fbcca")

# reported mean LOSO accuracies (%) of the original method, used only as an
# advisory reference by ``full-repro``
PUBLISHED_ACCURACY = {
    "benchmark": {0.3: 29.2, 0.4: 35.4, 0.5: 40.2, 0.6: 45.6, 0.7: 48.1},
    "beta": {0.3: 13.6, 0.4: 17.9, 0.5: 23.4, 0.6: 27.7, 0.7: 32.5},
    "nakanishi": {0.3: 25.9, 0.4: 37.4, 0.5: 48.4, 0.6: 56.5, 0.7: 66.3},
}
ADVISORY_TOLERANCE = 5.0


class UsageError(Exception):
    """Bad command line or configuration; exit code 2."""


# --- config ----------------------------------------------------------------

def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def effective_config(args, overrides):
    """Defaults < config file < flags that were given."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("methods",):
        if isinstance(cfg[key], str):
            cfg[key] = [m.strip() for m in cfg[key].split(",") if m.strip()]
    bad = [m for m in cfg["methods"] if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    if cfg["jobs"] is None:
        cfg["jobs"] = int(os.environ.get("SSVEPNET_JOBS", "1"))
    return cfg


def write_config(cfg, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def train_config(cfg):
    from .train import TrainConfig

    names = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: cfg[k] for k in names})


def model_config(cfg, n_samples, n_classes, channels):
    from .model import ModelConfig

    keep = ("temporal_kernel", "temporal_filters", "spatial_filters", "pool", "hidden",
            "elu_alpha", "tau", "cada_gate_init")
    return ModelConfig(n_samples=n_samples, n_classes=n_classes, channels=channels,
                       use_asdm=cfg["use_asdm"], use_augment=cfg["use_augment"],
                       **{k: cfg[k] for k in keep})


def filter_sos(cfg, sample_rate):
    from .signal_io import FilterSpec, butter_design

    if cfg["filter_low_hz"] is None:
        return None
    high = min(cfg["filter_high_hz"], 0.45 * sample_rate)
    return butter_design(FilterSpec(cfg["filter_low_hz"], high, sample_rate, cfg["filter_order"]))


def load_subjects(cfg, prepare=True):
    """Manifest plus the per-subject EpochSets (filtered and windowed when ``prepare``)."""
    from .signal_io import read_manifest
    from .train import prepare_subject

    if not cfg["data"]:
        raise UsageError("--data MANIFEST is required")
    manifest = read_manifest(cfg["data"])
    sos = filter_sos(cfg, manifest.sample_rate)
    tc = train_config(cfg)
    sets = []
    for sid in manifest.subject_ids:
        es = manifest.load_subject(sid)
        sets.append(prepare_subject(es, tc, sos) if prepare else es)
    return manifest, sets


def _out_dir(cfg):
    if not cfg["out"]:
        raise UsageError("--out DIR is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands --------------------------------------------------------------

def cmd_convert(args):
    from .convert import convert_dataset

    cfg = effective_config(args, {"out": args.out, "data": str(args.src)})
    out = _out_dir(cfg)
    manifest = convert_dataset(args.dataset, args.src, out, limit=args.subjects_limit)
    print(f"converted {len(manifest.subject_ids)} subject(s) of {args.dataset} -> "
          f"{out / 'manifest.json'}")
    return 0


def synth_frequencies(classes):
    from .synth import NAKANISHI_FREQS

    if classes <= len(NAKANISHI_FREQS):
        return NAKANISHI_FREQS[:classes]
    return tuple(8.0 + 0.2 * i for i in range(classes))


def cmd_synth(args):
    from .synth import SynthSpec, generate_dataset

    if args.classes < 2:
        raise UsageError("--classes must be >= 2")
    spec = SynthSpec(frequencies=synth_frequencies(args.classes), channels=args.channels,
                     trial_s=args.trial_s, trials_per_class=args.trials, subjects=args.subjects,
                     snr_db=args.snr, seed=args.seed)
    out = Path(args.out)
    manifest = generate_dataset(spec, out)
    doc = {"subjects": spec.subjects, "classes": args.classes, "trials_per_class": spec.trials_per_class,
           "snr_db": spec.snr_db, "trial_s": spec.trial_s, "channels": spec.channels,
           "seed": spec.seed}
    (out / "synth.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    total = spec.subjects * args.classes * spec.trials_per_class
    print(f"wrote {len(manifest.subject_ids)} subjects, {total} trials -> {out / 'manifest.json'}")
    return 0


def cmd_train(args):
    from .evaluation import rows_to_csv
    from .model import save_checkpoint
    from .train import loso_splits, run_loso, summarize

    cfg = effective_config(args, common_overrides(args))
    out = _out_dir(cfg)
    manifest, sets = load_subjects(cfg)
    write_config(cfg, out)
    tc = train_config(cfg)
    mc = model_config(cfg, sets[0].n_samples, manifest.n_classes, sets[0].n_channels)
    splits = loso_splits(manifest.subject_ids, tc.val_fraction)
    if cfg["subjects_limit"]:
        splits = splits[: cfg["subjects_limit"]]
    results = run_loso(sets, mc, tc, splits=splits, jobs=cfg["jobs"])
    rows = []
    for split, result, report in results:
        d = out / "splits" / split.test_subject
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.params, d / "model.ssvd")
        (d / "log.jsonl").write_text(result.log_lines())
        theta = result.params.theta
        rows.append([split.test_subject, f"{report.accuracy:.6f}", result.best_epoch,
                     len(result.log), "" if theta is None else f"{theta:.6f}"])
        print(f"{split.test_subject}: accuracy {100 * report.accuracy:.2f}% "
              f"(best epoch {result.best_epoch}/{len(result.log)})", flush=True)
    summary = summarize(results)
    summary["window_s"] = cfg["window_s"]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "summary.csv").write_text(
        rows_to_csv(["subject", "accuracy", "best_epoch", "epochs", "theta"], rows))
    print(f"mean accuracy {100 * summary['mean']:.2f}% +/- {100 * summary['std']:.2f}% "
          f"over {len(rows)} split(s)")
    return 0


def _checkpoint_config(cfg):
    run = Path(cfg["checkpoints"]) / "config.json"
    if not run.exists():
        raise FormatError(f"no config.json in checkpoint directory {cfg['checkpoints']}")
    return json.loads(run.read_text())


def cmd_eval(args):
    from .baselines import classify_trials
    from .evaluation import (
        combine_reports, confusion_csv, format_significance, metrics_report, roc_csv,
        rows_to_csv, significance_table,
    )
    from .model import load_checkpoint, predict_proba

    overrides = common_overrides(args)
    overrides.update(methods=args.compare or args.method, checkpoints=args.checkpoints,
                     wilcoxon=args.wilcoxon or None)
    cfg = effective_config(args, overrides)
    if "ours" in cfg["methods"]:
        if not cfg["checkpoints"]:
            raise UsageError("method 'ours' needs --checkpoints DIR (output of train)")
        run = _checkpoint_config(cfg)
        for key in ("window_s", "onset_s", "filter_low_hz", "filter_high_hz", "filter_order"):
            if overrides.get(key) is not None and overrides[key] != run[key]:
                raise UsageError(f"--{key} {overrides[key]} differs from the trained model ({run[key]})")
            cfg[key] = run[key]
    out = _out_dir(cfg)
    manifest, sets = load_subjects(cfg)
    write_config(cfg, out)
    R = manifest.n_classes
    per_method = {}
    summary_rows = []
    for method in cfg["methods"]:
        reports = []
        for es in sets:
            if method == "ours":
                path = Path(cfg["checkpoints"]) / "splits" / es.subject_id / "model.ssvd"
                if not path.exists():
                    continue
                params = load_checkpoint(path)
                reports.append(metrics_report(es.labels, predict_proba(es.data, params), R,
                                              subject_ids=[es.subject_id], params=params))
            else:
                preds, _ = classify_trials(es.data, manifest.stimulus_frequencies,
                                           manifest.sample_rate, method, cfg["harmonics"])
                reports.append(metrics_report(es.labels, np.eye(R)[preds], R,
                                              subject_ids=[es.subject_id]))
        if not reports:
            raise FormatError(f"no checkpoints found under {cfg['checkpoints']}/splits")
        d = out / method
        d.mkdir(parents=True, exist_ok=True)
        combined = combine_reports(reports)
        (d / "per_subject.csv").write_text(rows_to_csv(
            ["subject", "accuracy"], [[r.subject_ids[0], f"{r.accuracy:.6f}"] for r in reports]))
        (d / "confusion.csv").write_text(confusion_csv(combined.confusion))
        if method == "ours":
            labels = np.concatenate([es.labels for es in sets if es.subject_id in combined.subject_ids])
            probs = np.concatenate([predict_proba(es.data, load_checkpoint(
                Path(cfg["checkpoints"]) / "splits" / es.subject_id / "model.ssvd"))
                for es in sets if es.subject_id in combined.subject_ids])
            pooled = metrics_report(labels, probs, R)
            if pooled.fpr is not None:
                (d / "roc.csv").write_text(roc_csv(pooled.fpr, pooled.tpr))
                combined.auc = pooled.auc
        (d / "report.txt").write_text(combined.summary() + "\n")
        per_method[method] = {cfg["window_s"]: {r.subject_ids[0]: r.accuracy for r in reports}}
        summary_rows.append([method, cfg["window_s"], f"{combined.mean:.6f}", f"{combined.std:.6f}",
                             len(reports)])
        print(f"{method}: {combined.summary().splitlines()[0]}")
    (out / "summary.csv").write_text(
        rows_to_csv(["method", "window_s", "mean_accuracy", "std_accuracy", "subjects"], summary_rows))
    if cfg["wilcoxon"]:
        if len(per_method) < 2:
            raise UsageError("--wilcoxon needs at least two methods (--compare a,b)")
        ours = "ours" if "ours" in per_method else cfg["methods"][0]
        common = set.intersection(*(set(m[cfg["window_s"]]) for m in per_method.values()))
        trimmed = {m: {w: {s: v for s, v in accs.items() if s in common} for w, accs in pw.items()}
                   for m, pw in per_method.items()}
        rows = significance_table(trimmed, ours)
        (out / "significance.csv").write_text(rows_to_csv(
            ["method", "window_s", "stars", "p_value", "ci_low", "ci_high"],
            [[m, w, s, f"{p:.6g}", f"{lo:.3f}", f"{hi:.3f}"] for m, w, s, p, lo, hi in rows]))
        text = format_significance(rows)
        (out / "significance.txt").write_text(text + "\n")
        print(text)
    return 0


def cmd_infer(args):
    from .evaluation import rows_to_csv
    from .model import load_checkpoint, predict_proba
    from .signal_io import extract_window, read_epoch_file
    from .signal_io.filters import filtfilt

    cfg = effective_config(args, common_overrides(args))
    params = load_checkpoint(args.checkpoint)
    es = read_epoch_file(args.input)
    if not args.no_filter:
        sos = filter_sos(cfg, es.sample_rate)
        if sos is not None:
            es = filtfilt(es, sos)
    T = params.config.n_samples
    if es.n_samples != T:
        es = extract_window(es, cfg["onset_s"], T / es.sample_rate)
    probs = predict_proba(es.data, params)
    R = probs.shape[1]
    rows = [[i, int(p.argmax()), *[f"{v:.6f}" for v in p]] for i, p in enumerate(probs)]
    text = rows_to_csv(["trial", "prediction", *[f"p{k}" for k in range(R)]], rows)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    from .evaluation import latency_bench, rows_to_csv
    from .model import NetworkParams, load_checkpoint, param_count

    cfg = effective_config(args, {"out": args.out, "seed": args.seed,
                                  "bench_samples": args.samples})
    targets = []
    for path in args.checkpoint or []:
        if not Path(path).exists():
            raise FormatError(f"checkpoint not found: {path}")
        targets.append((str(path), load_checkpoint(path)))
    for w in args.window or []:
        mc = model_config(cfg, int(round(w * args.sample_rate)), args.classes, args.channels)
        targets.append((f"window={w}", NetworkParams.init(mc, seed=cfg["seed"])))
    if not targets:
        raise UsageError("give --checkpoint PATH and/or --window SECONDS")
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for name, params in targets:
        c = params.config
        n, nbytes = param_count(c)
        x = rng.normal(size=(cfg["bench_samples"], c.channels, c.n_samples)).astype(np.float32)
        stats = latency_bench(params, x)
        rows.append([name, c.n_samples, n, nbytes, f"{nbytes / 1e6:.4f}", f"{stats['mean_ms']:.4f}",
                     f"{stats['p95_ms']:.4f}", stats["n"]])
        print(f"{name}: {n} parameters, {nbytes / 1e6:.3f} MB, "
              f"{stats['mean_ms']:.2f} ms mean / {stats['p95_ms']:.2f} ms p95 over {stats['n']} samples")
    text = rows_to_csv(["model", "n_samples", "params", "bytes", "mb", "mean_ms", "p95_ms", "n"], rows)
    if cfg["out"]:
        out = _out_dir(cfg)
        write_config(cfg, out)
        (out / "bench.csv").write_text(text)
    return 0


def cmd_full_repro(args):
    """Convert (if needed), train and evaluate every dataset at every window."""
    from .evaluation import rows_to_csv

    root, out = Path(args.root), Path(args.out)
    rows = []
    for name in args.datasets:
        src = root / name
        manifest = src / "manifest.json"
        if not manifest.exists():
            conv = out / "data" / name
            if not (conv / "manifest.json").exists():
                print(f"converting {name} from {src}", flush=True)
                main(["convert", "--dataset", name, "--src", str(src), "--out", str(conv)])
            manifest = conv / "manifest.json"
        for w in args.windows:
            run = out / name / f"w{w:.1f}"
            argv = ["train", "--data", str(manifest), "--out", str(run), "--window", str(w),
                    "--seed", str(args.seed), "--jobs", str(args.jobs)]
            if args.config:
                argv += ["--config", args.config]
            if args.subjects_limit:
                argv += ["--subjects-limit", str(args.subjects_limit)]
            code = main(argv)
            if code:
                return code
            summary = json.loads((run / "summary.json").read_text())
            acc = 100 * summary["mean"]
            ref = PUBLISHED_ACCURACY.get(name, {}).get(round(w, 1))
            within = "" if ref is None else ("yes" if abs(acc - ref) <= ADVISORY_TOLERANCE else "no")
            rows.append([name, w, f"{acc:.2f}", f"{100 * summary['std']:.2f}",
                         "" if ref is None else ref, within])
            print(f"{name} @ {w:.1f} s: {acc:.2f}% (published {ref}%)", flush=True)
    out.mkdir(parents=True, exist_ok=True)
    text = rows_to_csv(["dataset", "window_s", "mean_accuracy_pct", "std_pct", "published_pct",
                        f"within_{ADVISORY_TOLERANCE:g}_points"], rows)
    (out / "full_repro.csv").write_text(text)
    sys.stdout.write(text)
    return 0


# --- parser ----------------------------------------------------------------

def _snr(value):
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid SNR {value!r}: expected dB as a number or -inf")


def _positive_int(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _windows(value):
    try:
        return [float(w) for w in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid window list {value!r}")


def _add_common(p, out_required=False):
    p.add_argument("--config", help="JSON file with configuration keys")
    p.add_argument("--data", help="dataset manifest.json")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=float, dest="window_s", help="window length in seconds")
    p.add_argument("--onset", type=float, dest="onset_s", help="window start after stimulus onset (s)")


def common_overrides(args):
    keys = ("data", "out", "seed", "window_s", "onset_s", "use_asdm", "use_augment",
            "subjects_limit", "jobs", "max_epochs", "lr", "batch_size", "patience")
    return {k: getattr(args, k, None) for k in keys}


def build_parser():
    parser = argparse.ArgumentParser(prog="ssvepnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a downloaded public dataset")
    p.add_argument("--dataset", required=True, choices=("benchmark", "beta", "nakanishi"))
    p.add_argument("--src", required=True, type=Path)
    p.add_argument("--out", required=True)
    p.add_argument("--subjects-limit", type=_positive_int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=_positive_int, default=6)
    p.add_argument("--classes", type=int, default=12)
    p.add_argument("--trials", type=_positive_int, default=10, help="trials per class")
    p.add_argument("--snr", type=_snr, default=0.0, help="dB; pure noise with --snr=-inf")
    p.add_argument("--trial-s", type=float, default=1.5)
    p.add_argument("--channels", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="leave-one-subject-out training")
    _add_common(p)
    p.add_argument("--no-asdm", dest="use_asdm", action="store_const", const=False)
    p.add_argument("--no-augment", dest="use_augment", action="store_const", const=False)
    p.add_argument("--subjects-limit", type=_positive_int, help="train only the first N splits")
    p.add_argument("--jobs", type=_positive_int, help="parallel splits (default $SSVEPNET_JOBS or 1)")
    p.add_argument("--epochs", type=_positive_int, dest="max_epochs")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--patience", type=_positive_int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained models and/or baselines")
    _add_common(p)
    p.add_argument("--method", type=lambda s: [s], help="ours, cca or fbcca")
    p.add_argument("--compare", help="comma-separated methods, e.g. ours,cca")
    p.add_argument("--checkpoints", help="train output directory")
    p.add_argument("--wilcoxon", action="store_true", help="paired signed-rank star table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict labels for an EEGT file")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--no-filter", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="parameter size and CPU latency")
    p.add_argument("--config")
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--window", type=float, action="append", help="untrained model of this window")
    p.add_argument("--samples", type=_positive_int, default=240)
    p.add_argument("--classes", type=int, default=12)
    p.add_argument("--channels", type=_positive_int, default=8)
    p.add_argument("--sample-rate", type=float, default=250.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("full-repro", help="train and score the public datasets at every window")
    p.add_argument("--root", required=True, help="directory with benchmark/, beta/, nakanishi/")
    p.add_argument("--out", required=True)
    p.add_argument("--datasets", type=lambda s: s.split(","), default=["benchmark", "beta", "nakanishi"])
    p.add_argument("--windows", type=_windows, default=[0.3, 0.4, 0.5, 0.6, 0.7])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--subjects-limit", type=_positive_int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_full_repro)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ssvepnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ParameterError, DimensionError, NumericContractError, OSError,
            KeyError) as exc:
        print(f"ssvepnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
