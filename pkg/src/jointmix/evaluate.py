"""Scoring of predicted labels against truth, and benchmark aggregation.

FDR, sensitivity and specificity are computed after collapsing the
three states to differential (down or up) versus null, which is the
only way a single rate per layer is well defined; the adjusted Rand
index is computed on the full three-class partition. Ratios with an
empty denominator are reported as ``None``, never coerced to 0 or 1.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import compare_partitions, fit_independent
from .dataset import CpgRecord, GeneRecord, build_paired_dataset
from .errors import JointmixError, ParameterError
from .joint_em import fit
from .preprocess import (
    DEFAULT_BETA_EPS,
    DEFAULT_COUNT_THRESHOLD,
    DEFAULT_PSEUDOCOUNT,
    derive_model_inputs,
)
from .simulate import CPG_LABELS, GENE_LABELS, SimConfig, simulate

logger = logging.getLogger(__name__)

NULL_LABELS = frozenset({"E0", "M0"})
METRIC_NAMES = ("fdr", "sensitivity", "specificity", "ari")
KNOWN_METHODS = ("joint", "independent")
AGREEMENT_METHOD = "joint_vs_independent"


@dataclass
class MetricReport:
    """Binary confusion counts plus derived rates and the 3-class ARI."""

    tp: int
    fp: int
    tn: int
    fn: int
    fdr: float | None
    sensitivity: float | None
    specificity: float | None
    ari: float | None = None

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "fdr": self.fdr, "sensitivity": self.sensitivity,
            "specificity": self.specificity, "ari": self.ari,
        }


def _ratio(num, den):
    return num / den if den > 0 else None


def binary_metrics(truth, predicted) -> MetricReport:
    """Differential-vs-null collapse and its 2x2 table rates."""
    t = np.asarray(truth)
    p = np.asarray(predicted)
    if t.shape != p.shape:
        raise ParameterError("truth and prediction differ in length")
    t_pos = ~np.isin(t, list(NULL_LABELS))
    p_pos = ~np.isin(p, list(NULL_LABELS))
    tp = int(np.sum(t_pos & p_pos))
    fp = int(np.sum(~t_pos & p_pos))
    tn = int(np.sum(~t_pos & ~p_pos))
    fn = int(np.sum(t_pos & ~p_pos))
    return MetricReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        fdr=_ratio(fp, tp + fp),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
    )


def three_class_ari(truth, predicted) -> float:
    """ARI over the full three-class partitions."""
    t = np.asarray(truth)
    p = np.asarray(predicted)
    if t.shape != p.shape:
        raise ParameterError("truth and prediction differ in length")
    return compare_partitions(t, p)


def score_labels(truth, predicted) -> MetricReport:
    report = binary_metrics(truth, predicted)
    report.ari = three_class_ari(truth, predicted)
    return report


def simulated_dataset(sim, count_threshold=DEFAULT_COUNT_THRESHOLD,
                      pseudocount=DEFAULT_PSEUDOCOUNT, beta_eps=DEFAULT_BETA_EPS):
    """Preprocess one simulation into a model-ready dataset plus truth.

    Returns ``(ds, gene_truth, cpg_truth)`` restricted to the genes that
    survive low-count filtering (and their CpGs).
    """
    t = sim.truth
    kept_g, x, kept_c, y = derive_model_inputs(
        sim.counts_a, sim.counts_b, sim.betas_a, sim.betas_b, t.cpg_gene_idx,
        count_threshold=count_threshold, pseudocount=pseudocount, beta_eps=beta_eps,
    )
    genes = [
        GeneRecord(t.gene_ids[i], "1", x[j]) for j, i in enumerate(kept_g)
    ]
    cpgs = [
        CpgRecord(t.cpg_ids[i], t.gene_ids[t.cpg_gene_idx[i]], "1", y[j])
        for j, i in enumerate(kept_c)
    ]
    ds = build_paired_dataset(genes, cpgs, sim.patients, mode="strict")
    return ds, t.gene_labels[kept_g], t.cpg_labels[kept_c]


@dataclass
class ReplicateScores:
    """Named label vectors and metric reports for one replicate."""

    reports: dict = field(default_factory=dict)  # (method, layer) -> MetricReport
    agreement: dict = field(default_factory=dict)  # layer -> float (ARI joint vs indep)


def run_replicate(cfg: SimConfig, methods=KNOWN_METHODS, fit_kwargs=None) -> ReplicateScores:
    """Simulate, preprocess, fit the requested methods, and score them."""
    fit_kwargs = dict(fit_kwargs or {})
    sim = simulate(cfg)
    ds, gene_truth, cpg_truth = simulated_dataset(sim)

    labels: dict = {}
    scores = ReplicateScores()
    if "joint" in methods:
        res = fit(ds, **fit_kwargs)
        gene_pred = np.array(GENE_LABELS)[res.map_gene - 1]
        cpg_pred = np.array(CPG_LABELS)[res.map_cpg - 1]
        labels["joint"] = {"gene": gene_pred, "cpg": cpg_pred}
        scores.reports[("joint", "gene")] = score_labels(gene_truth, gene_pred)
        scores.reports[("joint", "cpg")] = score_labels(cpg_truth, cpg_pred)
    if "independent" in methods:
        res_x = fit_independent(ds.x, K=3)
        res_y = fit_independent(ds.y, K=3)
        gene_pred = np.array(GENE_LABELS)[res_x.map_labels - 1]
        cpg_pred = np.array(CPG_LABELS)[res_y.map_labels - 1]
        labels["independent"] = {"gene": gene_pred, "cpg": cpg_pred}
        scores.reports[("independent", "gene")] = score_labels(gene_truth, gene_pred)
        scores.reports[("independent", "cpg")] = score_labels(cpg_truth, cpg_pred)
    if "joint" in labels and "independent" in labels:
        for layer in ("gene", "cpg"):
            scores.agreement[layer] = compare_partitions(
                labels["joint"][layer], labels["independent"][layer]
            )
    return scores


@dataclass
class BenchmarkResult:
    """Per-replicate metric values and their mean/sd aggregation.

    ``replicate_rows`` holds (replicate, method, layer, metric, value)
    with value possibly None; ``summary_rows`` holds
    (method, layer, metric, mean, sd, n) where n counts the defined
    per-replicate values entering the mean.
    """

    config: SimConfig
    methods: tuple
    n_replicates: int
    replicate_rows: list
    summary_rows: list
    failures: dict


def _aggregate(rows, methods_layers_metrics):
    summary = []
    for method, layer, metric in methods_layers_metrics:
        values = [
            v for (_, m, lay, met, v) in rows
            if m == method and lay == layer and met == metric and v is not None
        ]
        if values:
            arr = np.array(values, dtype=float)
            mean = float(arr.mean())
            sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        else:
            mean = None
            sd = None
        summary.append((method, layer, metric, mean, sd, len(values)))
    return summary


def benchmark(
    case,
    n_datasets,
    methods=KNOWN_METHODS,
    cfg: SimConfig | None = None,
    threads=1,
    fit_kwargs=None,
) -> BenchmarkResult:
    """Score ``n_datasets`` replicates and aggregate to mean/sd tables.

    Replicates are independent and may run on a thread pool; rows are
    assembled in replicate order, so the output is identical for any
    thread count. Replicates whose fit fails are recorded in
    ``failures`` and excluded from the aggregation.
    """
    if n_datasets < 2:
        raise ParameterError("benchmark needs at least 2 replicates")
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ParameterError(f"unknown method {m!r}")
    base = cfg if cfg is not None else SimConfig()
    base = replace(base, case=case) if case is not None else base

    results: list = [None] * n_datasets
    failures: dict = {}

    def one(r):
        return run_replicate(replace(base, replicate=base.replicate + r), methods, fit_kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {r: pool.submit(one, r) for r in range(n_datasets)}
        for r in range(n_datasets):
            try:
                results[r] = futures[r].result()
            except JointmixError as exc:
                failures[r] = str(exc)
    else:
        for r in range(n_datasets):
            try:
                results[r] = one(r)
            except JointmixError as exc:
                failures[r] = str(exc)
    if failures:
        logger.warning("%d of %d replicates failed to fit", len(failures), n_datasets)

    rows = []
    for r, scores in enumerate(results):
        if scores is None:
            continue
        for (method, layer), report in scores.reports.items():
            for metric in METRIC_NAMES:
                rows.append((r, method, layer, metric, getattr(report, metric)))
        for layer, value in scores.agreement.items():
            rows.append((r, AGREEMENT_METHOD, layer, "ari", value))

    combos = [(m, lay, met) for m in methods for lay in ("gene", "cpg") for met in METRIC_NAMES]
    if len(set(methods) & {"joint", "independent"}) == 2:
        combos += [(AGREEMENT_METHOD, "gene", "ari"), (AGREEMENT_METHOD, "cpg", "ari")]
    summary = _aggregate(rows, combos)
    return BenchmarkResult(
        config=base,
        methods=tuple(methods),
        n_replicates=n_datasets,
        replicate_rows=rows,
        summary_rows=summary,
        failures=failures,
    )
