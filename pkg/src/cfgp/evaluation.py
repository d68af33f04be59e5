"""Stability metrics and the factual-error protocol.

Risk scores are normalized negatives of each model's predicted
end-of-horizon value under the "do nothing" plan.  The stability report
compares, on one fixed test cohort, the scores produced by models trained
under different action policies: a model that has learned the outcome
process itself should barely move, while a policy-confounded one shifts.
Factual MAE evaluates predictions under each trace's actually observed
future actions, bucketed by hours ahead, with trace-level pivotal
bootstrap intervals for paired comparisons.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau, rankdata

from .errors import DegenerateDataError, DomainError
from .gp import MixtureModel, predict
from .simulator import TestBundle, read_truth
from .traces import ActionPlan, parse_traces, truncate_history

__all__ = [
    "RiskReport",
    "StabilityReport",
    "BootstrapCI",
    "risk_scores",
    "kendall_tau",
    "auc",
    "mae_by_horizon",
    "factual_absolute_errors",
    "pivotal_bootstrap",
    "stability_report",
    "render_stability_csv",
    "render_stability_text",
    "load_test_bundle",
]

DEFAULT_HORIZONS = ((0.0, 24.0), (24.0, 48.0))


def risk_scores(model: MixtureModel, bundle: TestBundle, cut: float = 12.0) -> np.ndarray:
    """Normalized risk scores, ordered like the bundle's traces.

    Per trace: minus the posterior predictive mean at the end of the
    horizon given the history before ``cut`` and an empty plan, then
    min-max normalized across the cohort.  A degenerate cohort (all raw
    scores equal) gets 0.5 everywhere, with a warning.
    """
    if len(bundle.dataset) == 0:
        raise DomainError("empty test bundle")
    raw = np.empty(len(bundle.dataset))
    for i, trace in enumerate(bundle.dataset.traces):
        history = truncate_history(trace, cut)
        pred = predict(model, history, ActionPlan(), np.array([trace.tau]))
        raw[i] = -float(pred.mean[0])
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= 0.0:
        warnings.warn("all raw risk scores equal; returning 0.5 for the whole cohort")
        return np.full(raw.size, 0.5)
    return (raw - lo) / (hi - lo)


def kendall_tau(x, y):
    """Tie-corrected Kendall's tau-b, or None when it is undefined.

    All-ties in either vector make the denominator zero; that case
    returns None rather than a number.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DomainError("need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    result = kendalltau(x, y)
    return float(result.statistic)


def auc(labels, scores) -> float:
    """Mann-Whitney AUC with half credit for tied scores."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    if labels.size != scores.size:
        raise DomainError(f"length mismatch: {labels.size} vs {scores.size}")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def factual_absolute_errors(model: MixtureModel, traces, cut: float = 12.0):
    """Per-trace (hours-ahead, |error|) pairs under the factual plan.

    The plan is each trace's actually observed future actions; queries are
    its future outcome times.  Traces with no future outcomes contribute
    an empty list.
    """
    out = []
    for trace in traces:
        history = truncate_history(trace, cut)
        future_outcomes = [(ev.t, ev.y) for ev in trace.events if ev.z_y and ev.t > cut]
        future_actions = [(ev.a, ev.t) for ev in trace.events if ev.z_a and ev.t > cut]
        if not future_outcomes:
            out.append([])
            continue
        times = np.array([t for t, _ in future_outcomes])
        values = np.array([y for _, y in future_outcomes])
        pred = predict(model, history, ActionPlan(tuple(future_actions)), times)
        errors = np.abs(pred.mean - values)
        out.append(list(zip((times - cut).tolist(), errors.tolist())))
    return out


def mae_by_horizon(
    model: MixtureModel,
    traces,
    horizons=DEFAULT_HORIZONS,
    cut: float = 12.0,
) -> dict:
    """Factual-plan MAE bucketed by hours ahead of the cut.

    Buckets are half-open (lo, hi].  Empty buckets map to None rather
    than zero.
    """
    errors = factual_absolute_errors(model, traces, cut)
    table = {}
    for lo, hi in horizons:
        pool = [e for per_trace in errors for dt, e in per_trace if lo < dt <= hi]
        table[(lo, hi)] = float(np.mean(pool)) if pool else None
    return table


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    level: float
    draws: int


def pivotal_bootstrap(stat, data, draws: int = 1000, level: float = 0.95, seed: int = 0) -> BootstrapCI:
    """Pivotal bootstrap interval (2t - q_hi, 2t - q_lo) for stat(data).

    Resampling is over the elements of ``data`` (trace level when the
    elements are traces).  A resample on which the statistic is
    non-finite is redrawn once; a second failure raises.
    """
    data = list(data)
    if not data:
        raise DomainError("bootstrap needs nonempty data")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    point = float(stat(data))
    n = len(data)
    values = np.empty(draws)
    for d in range(draws):
        value = np.nan
        for _ in range(2):
            idx = rng.integers(0, n, size=n)
            value = float(stat([data[i] for i in idx]))
            if np.isfinite(value):
                break
        if not np.isfinite(value):
            raise DegenerateDataError(
                f"bootstrap statistic non-finite on draw {d} after one retry"
            )
        values[d] = value
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return BootstrapCI(
        point=point,
        lower=float(2.0 * point - q_hi),
        upper=float(2.0 * point - q_lo),
        level=level,
        draws=draws,
    )


@dataclass(frozen=True)
class RiskReport:
    """One regime's scores, compared against the regime-A scores."""

    regime: str
    scores: np.ndarray
    delta_from_A: float
    tau_from_A: float | None
    auc: float


@dataclass(frozen=True)
class StabilityReport:
    """Per-regime risk reports on a common cohort.

    ``delta_from_A`` aggregates per-trace |score - score_A| by the mean.
    """

    reports: dict
    trace_ids: tuple


def stability_report(models: dict, bundle: TestBundle, cut: float = 12.0) -> StabilityReport:
    """Score every regime's model on one cohort and compare against A."""
    if "A" not in models:
        raise DomainError("stability report needs a regime-A model")
    ids = tuple(tr.id for tr in bundle.dataset.traces)
    labels = np.array([bundle.labels[i] for i in ids], dtype=bool)
    scores = {r: risk_scores(models[r], bundle, cut) for r in sorted(models)}
    reports = {}
    for regime in sorted(models):
        s = scores[regime]
        reports[regime] = RiskReport(
            regime=regime,
            scores=s,
            delta_from_A=float(np.mean(np.abs(s - scores["A"]))),
            tau_from_A=kendall_tau(scores["A"], s),
            auc=auc(labels, s),
        )
    return StabilityReport(reports=reports, trace_ids=ids)


def _fmt_tau(tau) -> str:
    return "undef" if tau is None else f"{tau:.3f}"


def render_stability_csv(report: StabilityReport) -> str:
    buf = io.StringIO()
    buf.write("regime,delta_from_A,tau_from_A,auc\n")
    for regime in sorted(report.reports):
        r = report.reports[regime]
        tau = "" if r.tau_from_A is None else f"{r.tau_from_A:.6f}"
        buf.write(f"{regime},{r.delta_from_A:.6f},{tau},{r.auc:.6f}\n")
    return buf.getvalue()


def render_stability_text(report: StabilityReport) -> str:
    """Aligned table: metric rows, one column per training regime."""
    regimes = sorted(report.reports)
    rows = [
        ("risk score delta from A", [f"{report.reports[r].delta_from_A:.3f}" for r in regimes]),
        ("kendall tau from A", [_fmt_tau(report.reports[r].tau_from_A) for r in regimes]),
        ("auc", [f"{report.reports[r].auc:.3f}" for r in regimes]),
    ]
    label_w = max(len(label) for label, _ in rows)
    col_w = max(5, *(len(r) for r in regimes), *(len(c) for _, cells in rows for c in cells))
    lines = [
        f"delta aggregates per-trace |score - score_A| by the mean "
        f"(n={len(report.trace_ids)})",
        " " * label_w + "  " + "  ".join(r.rjust(col_w) for r in regimes),
    ]
    for label, cells in rows:
        lines.append(label.ljust(label_w) + "  " + "  ".join(c.rjust(col_w) for c in cells))
    return "\n".join(lines) + "\n"


def load_test_bundle(traces_path, truth_path, cut: float = 12.0) -> TestBundle:
    """Assemble a test bundle from a trace file and its truth sidecar."""
    dataset = parse_traces(traces_path)
    truth = read_truth(truth_path)
    labels = {tid: bool(row["label"]) for tid, row in truth.items()}
    return TestBundle(dataset=dataset, labels=labels, cut_time=cut)
