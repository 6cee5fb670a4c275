"""Metrics, significance statistics and the size/latency benchmark."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

EXACT_MAX_N = 25


def confusion(labels, preds, n_classes):
    """Count matrix with rows = true class, columns = predicted class."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape:
        raise ParameterError("labels and predictions differ in length")
    for name, arr in (("label", labels), ("prediction", preds)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ParameterError(f"{name} outside [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (labels, preds), 1)
    return mat


def accuracy_from_confusion(mat):
    total = mat.sum()
    return float(np.trace(mat) / total) if total else float("nan")


def roc_curve_binary(scores, positives):
    """ROC points (fpr, tpr) with one point per distinct score threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = positives.sum()
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("ROC needs both positive and negative samples")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = positives[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]  # end of each tie group
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return fpr, tpr


def roc_auc(scores, labels, n_classes=None):
    """Micro-averaged one-vs-rest ROC and trapezoid AUC for probability rows (N, R)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.size:
        raise ParameterError("scores must be (N, R) with one label per row")
    R = scores.shape[1] if n_classes is None else n_classes
    if np.unique(labels).size < 2:
        raise ParameterError("ROC needs at least two distinct classes")
    onehot = np.eye(R, dtype=bool)[labels]
    fpr, tpr = roc_curve_binary(scores.reshape(-1), onehot.reshape(-1))
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return fpr, tpr, auc


# --- Wilcoxon signed-rank --------------------------------------------------

@dataclass
class WilcoxonResult:
    n: int
    w_plus: float
    w_minus: float
    p_value: float
    mode: str  # "exact", "normal" or "degenerate"
    ci: tuple = (float("nan"), float("nan"))
    mean_diff: float = float("nan")


def average_ranks(values):
    """1-based ranks with ties sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def signed_rank_counts(doubled_ranks):
    """Number of sign assignments giving each value of 2*W+ (dynamic programming)."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def exact_two_sided_p(doubled_ranks, w2_plus):
    counts = signed_rank_counts(doubled_ranks)
    n_assign = 2 ** len(doubled_ranks)
    lower = int(sum(counts[: w2_plus + 1]))
    upper = int(sum(counts[w2_plus:]))
    return min(1.0, 2.0 * min(lower, upper) / n_assign)


def bootstrap_ci(diffs, n_resamples=10_000, level=0.95, seed=0):
    """Percentile interval for the mean of ``diffs``."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.size == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(n_resamples, diffs.size))
    means = diffs[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(means, alpha)), float(np.quantile(means, 1.0 - alpha))


def wilcoxon_signed_rank(a, b, n_resamples=10_000, seed=0):
    """Paired two-sided test; zero differences are discarded.

    Exact p-values (all 2^n sign assignments, counted by dynamic programming)
    for n <= 25, otherwise the normal approximation with tie and continuity
    corrections.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("need two equal-length 1-D samples")
    diffs_all = a - b
    ci = bootstrap_ci(diffs_all, n_resamples, seed=seed)
    mean_diff = float(diffs_all.mean()) if diffs_all.size else float("nan")
    d = diffs_all[diffs_all != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0, 0.0, 0.0, 1.0, "degenerate", ci, mean_diff)
    if n < 5:
        raise ParameterError(f"need at least 5 non-zero differences, got {n}")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    if n <= EXACT_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        p = exact_two_sided_p(doubled, int(round(2 * w_plus)))
        mode = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
        z = (abs(w_plus - mean) - 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
        mode = "normal"
    return WilcoxonResult(n, w_plus, w_minus, p, mode, ci, mean_diff)


def brute_force_p(a, b):
    """Reference exact p by listing every sign vector (only for small n)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    ranks = average_ranks(np.abs(d))
    observed = ranks[d > 0].sum()
    n = d.size
    signs = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(bool)
    w = (signs * ranks).sum(axis=1)
    lower = np.count_nonzero(w <= observed + 1e-9)
    upper = np.count_nonzero(w >= observed - 1e-9)
    return min(1.0, 2.0 * min(lower, upper) / 2 ** n)


def star_code(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "-"


def significance_table(results, ours, subjects=None):
    """Star-coded comparisons of ``ours`` against every other method.

    ``results`` maps method -> window -> {subject: accuracy}. Returns rows of
    (method, window, stars, p, ci_low, ci_high) with CIs in accuracy points.
    """
    rows = []
    base = results[ours]
    for method, per_window in results.items():
        if method == ours:
            continue
        for window in sorted(per_window):
            mine, theirs = base[window], per_window[window]
            if set(mine) != set(theirs):
                raise ParameterError(f"{method} @ {window}: subject lists differ")
            keys = sorted(mine)
            a = np.array([mine[k] for k in keys])
            b = np.array([theirs[k] for k in keys])
            res = wilcoxon_signed_rank(a, b) if np.any(a != b) else \
                WilcoxonResult(0, 0.0, 0.0, 1.0, "degenerate", (0.0, 0.0), 0.0)
            rows.append((method, window, star_code(res.p_value), res.p_value,
                         100 * res.ci[0], 100 * res.ci[1]))
    return rows


def format_significance(rows):
    lines = [f"{'method':<10}{'window':>8}{'sig':>6}{'p':>11}   CI (acc. points)"]
    for method, window, stars, p, lo, hi in rows:
        lines.append(f"{method:<10}{window:>8}{stars:>6}{p:>11.3g}   [{lo:.1f}, {hi:.1f}]")
    return "\n".join(lines)


# --- reports ---------------------------------------------------------------

@dataclass
class MetricsReport:
    subject_accuracies: list
    confusion: np.ndarray
    accuracy: float
    fpr: np.ndarray | None = None
    tpr: np.ndarray | None = None
    auc: float | None = None
    n_params: int | None = None
    n_bytes: int | None = None
    latency: dict = field(default_factory=dict)
    subject_ids: list = field(default_factory=list)

    @property
    def mean(self):
        return float(np.mean(self.subject_accuracies))

    @property
    def std(self):
        return float(np.std(self.subject_accuracies))

    def summary(self):
        lines = [f"accuracy {100 * self.mean:.2f}% +/- {100 * self.std:.2f}% "
                 f"over {len(self.subject_accuracies)} subject(s)"]
        if self.auc is not None:
            lines.append(f"micro-averaged AUC {self.auc:.4f}")
        if self.n_params is not None:
            lines.append(f"parameters {self.n_params} ({self.n_bytes / 1e6:.3f} MB at 32-bit)")
        return "\n".join(lines)


def metrics_report(labels, probs, n_classes, subject_ids=(), params=None):
    labels = np.asarray(labels)
    probs = np.asarray(probs)
    preds = probs.argmax(axis=1)
    mat = confusion(labels, preds, n_classes)
    acc = accuracy_from_confusion(mat)
    fpr = tpr = auc = None
    if np.unique(labels).size >= 2:
        fpr, tpr, auc = roc_auc(probs, labels, n_classes)
    report = MetricsReport([acc], mat, acc, fpr, tpr, auc, subject_ids=list(subject_ids))
    if params is not None:
        from .model import param_count

        report.n_params, report.n_bytes = param_count(params.config)
    return report


def combine_reports(reports):
    mats = sum(r.confusion for r in reports)
    out = MetricsReport([r.accuracy for r in reports], mats, accuracy_from_confusion(mats),
                        subject_ids=[s for r in reports for s in r.subject_ids])
    out.n_params = reports[0].n_params
    out.n_bytes = reports[0].n_bytes
    return out


def rows_to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def confusion_csv(mat):
    R = mat.shape[0]
    return rows_to_csv(["true\\pred", *range(R)], [[i, *mat[i].tolist()] for i in range(R)])


def roc_csv(fpr, tpr):
    return rows_to_csv(["fpr", "tpr"], [[f"{a:.6g}", f"{b:.6g}"] for a, b in zip(fpr, tpr)])


# --- latency ---------------------------------------------------------------

def latency_stats(times_s):
    t = np.asarray(times_s, dtype=np.float64)
    return {"n": int(t.size), "mean_ms": float(1e3 * t.mean()),
            "p95_ms": float(1e3 * np.percentile(t, 95)), "times_ms": (1e3 * t).tolist()}


def latency_bench(params, samples, repeats=1, warmup=10, clock=time.perf_counter):
    """Per-sample wall-clock inference time on one thread (batch of one)."""
    from threadpoolctl import threadpool_limits

    from . import diffcore as dc
    from .model import forward

    samples = np.asarray(samples, dtype=np.float32)
    times = []
    with threadpool_limits(limits=1), dc.no_grad():
        for i in range(min(warmup, len(samples))):
            forward(samples[i:i + 1], params)
        for _ in range(repeats):
            for i in range(len(samples)):
                start = clock()
                forward(samples[i:i + 1], params)
                times.append(clock() - start)
    return latency_stats(times)
