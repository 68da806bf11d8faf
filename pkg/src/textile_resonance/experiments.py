"""Monte-Carlo accuracy experiments: simulate, estimate, score.

Three sweeps are provided:

* ``run_experiment1``: coupling-factor recovery for a reference-only
  interface, swept over the reference resonance and line-length ranges.
* ``run_experiment2``: one sensor next to a 27 MHz reference; scores the
  capacitive value, the resistive value and the line capacitances.
* ``run_experiment3``: three sensors around a swept middle resonance with
  1-5 MHz gaps; scores the middle branch.

Every repetition draws its design from ``rng_stream(seed, exp, cond, rep)``
and its noise from ``rng_stream(seed, exp, cond, rep, 1)``, so results do not
depend on worker count or scheduling. Accuracies use the symmetric ratio
``min(est/true, true/est)``; failed estimates are counted in ``n_failed``
and excluded from ``mean``/``std``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit_model import Role
from .estimator import DEFAULT_CONFIG, EstimatorConfig, estimate_batch
from .simulator import (
    EXPERIMENT1,
    EXPERIMENT2,
    EXPERIMENT3,
    Condition,
    ScenarioSpec,
    range_label,
    rng_stream,
    sample_design,
    synthesize_batch,
)

MHz = 1e6
CSV_COLUMNS = ("experiment", "metric", "line_range", "gap_mhz", "frequency_mhz", "mean", "std", "n", "n_failed")
CAPPED_RATIO = (0.1, 0.5)
CAPPED_LINE_RANGES = ((0.5, 0.75),)


def symmetric_accuracy(estimate, truth):
    """``min(est/true, true/est)``; NaN where the estimate is missing or non-positive."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.minimum(est / tru, tru / est)
    return np.where((est > 0) & np.isfinite(est), acc, np.nan)


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    metric: str
    line_range: str
    gap: float | None
    frequency: float
    mean: float
    std: float
    n: int
    n_failed: int

    @property
    def n_ok(self) -> int:
        return self.n - self.n_failed

    def csv_fields(self) -> list:
        return [
            self.experiment,
            self.metric,
            self.line_range,
            "" if self.gap is None else f"{self.gap / MHz:g}",
            f"{self.frequency / MHz:.6f}",
            _fmt(self.mean),
            _fmt(self.std),
            str(self.n),
            str(self.n_failed),
        ]


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.6f}"


def score_row(experiment, metric, cond: Condition, acc) -> ReportRow:
    acc = np.asarray(acc, dtype=float)
    ok = acc[np.isfinite(acc)]
    mean = float(ok.mean()) if ok.size else math.nan
    std = float(ok.std()) if ok.size else math.nan
    return ReportRow(experiment, metric, range_label(*cond.line_range), cond.gap, cond.frequency,
                     mean, std, int(acc.size), int(acc.size - ok.size))


@dataclass
class ExperimentReport:
    """Per-condition accuracy rows, in condition order."""

    rows: list = field(default_factory=list)
    seed: int = 0
    reps: int = 0

    def select(self, experiment=None, metric=None, line_range=None, gap=None, fmin=-math.inf, fmax=math.inf):
        def keep(r):
            return (
                (experiment is None or r.experiment == experiment)
                and (metric is None or r.metric == metric)
                and (line_range is None or r.line_range == line_range)
                and (gap is None or (r.gap is not None and abs(r.gap - gap) < 1.0))
                and fmin - 1.0 <= r.frequency <= fmax + 1.0
            )

        return [r for r in self.rows if keep(r)]

    def pooled(self, **query) -> float:
        """Mean over every successful repetition matching ``query``."""
        rows = [r for r in self.select(**query) if r.n_ok]
        total = sum(r.n_ok for r in rows)
        return math.nan if not total else sum(r.mean * r.n_ok for r in rows) / total

    def failures(self, **query) -> tuple:
        rows = self.select(**query)
        return sum(r.n_failed for r in rows), sum(r.n for r in rows)

    def __add__(self, other: "ExperimentReport") -> "ExperimentReport":
        return ExperimentReport(self.rows + other.rows, self.seed, self.reps)


# ---------------------------------------------------------------------------
# one condition


def _draw(spec: ScenarioSpec, cond: Condition, reps: int, seed: int, exp_id: int, roles=None):
    samples = [sample_design(spec, rng_stream(seed, exp_id, cond.index, rep), cond, roles) for rep in range(reps)]
    truths = [s.truth for s in samples]
    noise_rngs = [rng_stream(seed, exp_id, cond.index, rep, 1) for rep in range(reps)]
    values = synthesize_batch(truths, spec.grid, spec.noise, noise_rngs)
    return samples, truths, values


def _condition_exp1(spec, cond, reps, seed, config):
    samples, truths, values = _draw(spec, cond, reps, seed, 1)
    out = estimate_batch(values, spec.grid.frequencies, [s.known for s in samples], config, fit=False)
    acc = symmetric_accuracy(np.where(out["k_ok"], out["k"], np.nan), [t.coupling_factor for t in truths])
    return [score_row(spec.name, "k-accuracy", cond, acc)]


def _condition_exp2(spec, cond, reps, seed, config, name=None, capacitive=True):
    name = name or spec.name
    samples, truths, values = _draw(spec, cond, reps, seed, 2)
    freqs = spec.grid.frequencies
    rows = []
    if capacitive:
        cap = estimate_batch(values, freqs, [s.view([Role.REFERENCE, Role.CAPACITIVE]) for s in samples], config, fit=False)
        rows.append(score_row(name, "c-accuracy", cond, symmetric_accuracy(cap["values"][:, 1], [t.branches[1].c for t in truths])))
    res = estimate_batch(values, freqs, [s.view([Role.REFERENCE, Role.RESISTIVE]) for s in samples], config)
    rows.append(score_row(name, "r-accuracy", cond, symmetric_accuracy(res["r"][:, 1], [t.branches[1].r for t in truths])))
    if capacitive:
        true_cl = np.array([[b.line.C_line for b in t.branches] for t in truths])
        # one score per repetition: the mean over that interface's lines
        cl = symmetric_accuracy(res["c_line"], true_cl).mean(axis=1)
        rows.append(score_row(name, "C_line-accuracy", cond, cl))
    return rows


def _condition_exp3(spec, cond, reps, seed, config):
    cap_roles = [Role.CAPACITIVE, Role.CAPACITIVE, Role.CAPACITIVE]
    samples, truths, values = _draw(spec, cond, reps, seed, 3, cap_roles)
    freqs = spec.grid.frequencies
    cap = estimate_batch(values, freqs, [s.known for s in samples], config, fit=False)
    res_view = [Role.REFERENCE, Role.CAPACITIVE, Role.RESISTIVE, Role.CAPACITIVE]
    res = estimate_batch(values, freqs, [s.view(res_view) for s in samples], config)
    return [
        score_row(spec.name, "c-accuracy", cond, symmetric_accuracy(cap["values"][:, 2], [t.branches[2].c for t in truths])),
        score_row(spec.name, "r-accuracy", cond, symmetric_accuracy(res["r"][:, 2], [t.branches[2].r for t in truths])),
    ]


def _run(conditions, job, threads: int, progress=None) -> list:
    rows = []

    def done(i, part):
        rows.extend(part)
        if progress is not None:
            progress(i + 1, len(conditions))

    if threads <= 1:
        for i, cond in enumerate(conditions):
            done(i, job(cond))
    else:
        # map preserves input order, so row order is independent of scheduling
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, part in enumerate(pool.map(job, conditions)):
                done(i, part)
    return rows


def run_experiment1(spec: ScenarioSpec = EXPERIMENT1, reps: int | None = None, seed: int = 0,
                    config: EstimatorConfig = DEFAULT_CONFIG, threads: int = 1, progress=None) -> ExperimentReport:
    reps = spec.reps if reps is None else reps
    rows = _run(spec.conditions(), lambda c: _condition_exp1(spec, c, reps, seed, config), threads, progress)
    return ExperimentReport(rows, seed, reps)


def run_experiment2(spec: ScenarioSpec = EXPERIMENT2, reps: int | None = None, seed: int = 0,
                    config: EstimatorConfig = DEFAULT_CONFIG, threads: int = 1, progress=None,
                    capped_ratio=CAPPED_RATIO, capped_line_ranges=CAPPED_LINE_RANGES) -> ExperimentReport:
    """Single-sensor sweep plus a resistive re-run with the l/c ratio capped.

    The capped rows reuse the random streams of the matching uncapped
    conditions, so the comparison is paired. Set ``capped_ratio=None`` to
    skip it.
    """
    reps = spec.reps if reps is None else reps
    conds = spec.conditions()
    jobs = [(c, lambda c: _condition_exp2(spec, c, reps, seed, config)) for c in conds]
    if capped_ratio is not None:
        capped = replace(spec, ratio_range=tuple(capped_ratio))
        wanted = {tuple(lr) for lr in capped_line_ranges}
        jobs += [
            (c, lambda c: _condition_exp2(capped, c, reps, seed, config, spec.name + "-capped", capacitive=False))
            for c in conds if tuple(c.line_range) in wanted
        ]
    rows = _run(jobs, lambda job: job[1](job[0]), threads, progress)
    return ExperimentReport(rows, seed, reps)


def run_experiment3(spec: ScenarioSpec = EXPERIMENT3, reps: int | None = None, seed: int = 0,
                    config: EstimatorConfig = DEFAULT_CONFIG, threads: int = 1, progress=None) -> ExperimentReport:
    reps = spec.reps if reps is None else reps
    rows = _run(spec.conditions(), lambda c: _condition_exp3(spec, c, reps, seed, config), threads, progress)
    return ExperimentReport(rows, seed, reps)


RUNNERS = {1: run_experiment1, 2: run_experiment2, 3: run_experiment3}


# ---------------------------------------------------------------------------
# headline checks


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float | str
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {_fmt(self.value)} (bound {self.bound})"


def headline_checks(report: ExperimentReport) -> list:
    """Aggregate accuracy checks for whichever experiments the report holds."""
    checks = []
    names = {r.experiment for r in report.rows}
    if "experiment1" in names:
        hi = report.pooled(experiment="experiment1", fmin=10 * MHz)
        checks.append(Check("k accuracy, reference >= 10 MHz", hi, ">= 0.97", hi >= 0.97))
        low = [r.mean for r in report.select(experiment="experiment1", fmax=10 * MHz - 2.0)]
        worst = min(low, default=math.nan)
        checks.append(Check("k accuracy, worst bin below 10 MHz", worst, "in [0.80, 1.0]",
                            bool(low) and all(0.80 <= m <= 1.0 for m in low)))
    if "experiment2" in names:
        c = report.pooled(experiment="experiment2", metric="c-accuracy", line_range="0-25cm", fmin=5 * MHz, fmax=25 * MHz)
        checks.append(Check("capacitive accuracy, 5-25 MHz, lines < 25 cm", c, ">= 0.97", c >= 0.97))
        r = report.pooled(experiment="experiment2", metric="r-accuracy", line_range="0-25cm", fmin=5 * MHz, fmax=24 * MHz)
        checks.append(Check("resistive accuracy, 5-24 MHz, lines < 25 cm", r, ">= 0.85", r >= 0.85))
        cl = report.pooled(experiment="experiment2", metric="C_line-accuracy")
        checks.append(Check("line capacitance accuracy, all conditions", cl, ">= 0.94", cl >= 0.94))
    if "experiment2-capped" in names:
        base = report.pooled(experiment="experiment2", metric="r-accuracy", line_range="50-75cm")
        cap = report.pooled(experiment="experiment2-capped", metric="r-accuracy", line_range="50-75cm")
        checks.append(Check("resistive accuracy 50-75 cm, l/c ratio capped at 0.5", cap,
                            f"> uncapped {_fmt(base)}", cap > base))
    if "experiment3" in names:
        q = dict(experiment="experiment3")
        c5 = report.pooled(metric="c-accuracy", gap=5 * MHz, **q)
        c1 = report.pooled(metric="c-accuracy", gap=1 * MHz, **q)
        r5 = report.pooled(metric="r-accuracy", gap=5 * MHz, fmin=10 * MHz, **q)
        r1 = report.pooled(metric="r-accuracy", gap=1 * MHz, fmin=10 * MHz, **q)
        checks += [
            Check("middle capacitive accuracy, 5 MHz gap", c5, ">= 0.95", c5 >= 0.95),
            Check("middle capacitive accuracy, 1 MHz gap", c1, ">= 0.93", c1 >= 0.93),
            Check("middle resistive accuracy above 10 MHz, 5 MHz gap", r5, ">= 0.80", r5 >= 0.80),
            Check("middle resistive accuracy above 10 MHz, 5 vs 1 MHz gap", r5, f"> {_fmt(r1)}", r5 > r1),
        ]
    return checks


# ---------------------------------------------------------------------------
# output


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def _bin_table(report, experiment, metric, group):
    """Accuracy per line range (or gap) and 5 MHz frequency band."""
    rows = report.select(experiment=experiment, metric=metric)
    if not rows:
        return []
    edges = np.arange(0, 35, 5) * MHz
    keys = sorted({group(r) for r in rows}, key=lambda g: (len(g), g))
    out = [f"  {metric} [{experiment}]"]
    header = "    " + "group".ljust(10) + "".join(f"{f'{a / MHz:g}-{b / MHz:g}':>9}" for a, b in zip(edges[:-1], edges[1:]))
    out.append(header + "   failed")
    for key in keys:
        cells, failed, total = [], 0, 0
        for a, b in zip(edges[:-1], edges[1:]):
            last = b == edges[-1]
            sel = [r for r in rows if group(r) == key and a <= r.frequency and (r.frequency < b or last)]
            ok = sum(r.n_ok for r in sel)
            cells.append(f"{sum(r.mean * r.n_ok for r in sel if r.n_ok) / ok:9.4f}" if ok else " " * 9)
            failed += sum(r.n_failed for r in sel)
            total += sum(r.n for r in sel)
        out.append("    " + key.ljust(10) + "".join(cells) + f"   {failed}/{total}")
    return out


def report_summary(report: ExperimentReport) -> str:
    lines = [f"seed {report.seed}, {report.reps} repetitions per condition", ""]
    by_range = lambda r: r.line_range
    by_gap = lambda r: f"{r.gap / MHz:g} MHz"
    tables = [
        ("experiment1", "k-accuracy", by_range),
        ("experiment2", "c-accuracy", by_range),
        ("experiment2", "r-accuracy", by_range),
        ("experiment2-capped", "r-accuracy", by_range),
        ("experiment2", "C_line-accuracy", by_range),
        ("experiment3", "c-accuracy", by_gap),
        ("experiment3", "r-accuracy", by_gap),
    ]
    for exp, metric, group in tables:
        t = _bin_table(report, exp, metric, group)
        if t:
            lines += t + [""]
    checks = headline_checks(report)
    if checks:
        lines.append("checks")
        lines += ["  " + c.line() for c in checks]
    return "\n".join(lines).rstrip() + "\n"


def write_report(report: ExperimentReport, path) -> tuple:
    """Write ``path`` (CSV) and a ``.txt`` summary next to it; returns both paths."""
    path = Path(path)
    summary = path.with_suffix(".txt") if path.suffix != ".txt" else path.with_name(path.stem + ".summary.txt")
    path.write_text(report_csv(report), encoding="utf-8")
    summary.write_text(report_summary(report), encoding="utf-8")
    return path, summary


def read_report(path) -> ExperimentReport:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [
            ReportRow(
                d["experiment"], d["metric"], d["line_range"],
                float(d["gap_mhz"]) * MHz if d["gap_mhz"] else None,
                float(d["frequency_mhz"]) * MHz, float(d["mean"]), float(d["std"]),
                int(d["n"]), int(d["n_failed"]),
            )
            for d in reader
        ]
    reps = rows[0].n if rows else 0
    return ExperimentReport(rows, 0, reps)
