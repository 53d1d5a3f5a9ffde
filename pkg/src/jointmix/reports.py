"""Rendering of fitted models, result tables, and benchmark tables.

All writers are deterministic: rows follow input order (or replicate
order), floats are written in shortest round-trip form, and undefined
ratios appear as ``NA`` in TSVs and ``null`` in JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import PairedDataset, split_by_chromosome
from .evaluate import BenchmarkResult, MetricReport
from .simulate import CPG_LABELS, GENE_LABELS

GENE_POSTERIOR_COLUMNS = ("posterior_Eminus", "posterior_E0", "posterior_Eplus")
CPG_POSTERIOR_COLUMNS = ("posterior_Mminus", "posterior_M0", "posterior_Mplus")


def format_cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return str(int(f)) if f.is_integer() else repr(f)
    return str(v)


def write_tsv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(format_cell(v) for v in row) + "\n")


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def gene_label_names(k: int) -> list[str]:
    return list(GENE_LABELS) if k == 3 else [f"E{i + 1}" for i in range(k)]


def cpg_label_names(l: int) -> list[str]:
    return list(CPG_LABELS) if l == 3 else [f"M{i + 1}" for i in range(l)]


def gene_posterior_columns(k: int) -> list[str]:
    if k == 3:
        return list(GENE_POSTERIOR_COLUMNS)
    return [f"posterior_E{i + 1}" for i in range(k)]


def cpg_posterior_columns(l: int) -> list[str]:
    if l == 3:
        return list(CPG_POSTERIOR_COLUMNS)
    return [f"posterior_M{i + 1}" for i in range(l)]


def joint_params_payload(result) -> dict:
    """JSON payload for one fitted chromosome of the joint model."""
    p = result.params
    return {
        "tau": p.tau.tolist(),
        "pi": p.pi.tolist(),
        "mu": p.mu.tolist(),
        "sigma2": float(p.sigma2),
        "lambda": p.lam.tolist(),
        "rho2": float(p.rho2),
        "n_outer_iters": int(result.n_outer_iters),
        "converged": bool(result.converged),
    }


def joint_model_payload(K, L, results: dict) -> dict:
    """Nested per-chromosome model JSON for the joint fit."""
    return {
        "model": "joint",
        "K": int(K),
        "L": int(L),
        "chromosomes": {label: joint_params_payload(r) for label, r in sorted(results.items())},
    }


def independent_model_payload(K, per_chrom: dict) -> dict:
    chroms = {}
    for label, res in sorted(per_chrom.items()):
        chroms[label] = {
            "weights": res.params.weights.tolist(),
            "means": res.params.means.tolist(),
            "variance": float(res.params.variance),
            "n_iters": int(res.n_iters),
            "converged": bool(res.converged),
        }
    return {"model": "independent", "K": int(K), "chromosomes": chroms}


def assemble_joint_result_rows(ds: PairedDataset, results: dict, K: int, L: int):
    """Per-entity output rows in the input dataset's record order.

    Entities on chromosomes without a successful fit are skipped.
    """
    gene_names = gene_label_names(K)
    cpg_names = cpg_label_names(L)
    sub_by_label = {sub.genes[0].chromosome: sub for sub in split_by_chromosome(ds)}

    gene_lookup = {}
    cpg_lookup = {}
    for label, res in results.items():
        sub = sub_by_label[label]
        for i, g in enumerate(sub.genes):
            gene_lookup[g.gene_id] = (
                res.resp.u_hat[i], gene_names[res.map_gene[i] - 1], res.uncertainty_gene[i]
            )
        for i, c in enumerate(sub.cpgs):
            cpg_lookup[c.cpg_id] = (
                res.resp.v_hat[i], cpg_names[res.map_cpg[i] - 1], res.uncertainty_cpg[i]
            )

    gene_rows = []
    for g in ds.genes:
        hit = gene_lookup.get(g.gene_id)
        if hit is None:
            continue
        post, label, unc = hit
        gene_rows.append([g.gene_id, g.chromosome, *post.tolist(), label, unc])
    cpg_rows = []
    for c in ds.cpgs:
        hit = cpg_lookup.get(c.cpg_id)
        if hit is None:
            continue
        post, label, unc = hit
        cpg_rows.append([c.cpg_id, c.gene_id, c.chromosome, *post.tolist(), label, unc])
    return gene_rows, cpg_rows


def write_joint_results(out_dir, ds, results, K, L) -> list[Path]:
    out = Path(out_dir)
    gene_rows, cpg_rows = assemble_joint_result_rows(ds, results, K, L)
    gene_path = out / "gene_results.tsv"
    write_tsv(
        gene_path,
        ["gene_id", "chromosome", *gene_posterior_columns(K), "map_label", "uncertainty"],
        gene_rows,
    )
    cpg_path = out / "cpg_results.tsv"
    write_tsv(
        cpg_path,
        ["cpg_id", "gene_id", "chromosome", *cpg_posterior_columns(L), "map_label", "uncertainty"],
        cpg_rows,
    )
    model_path = out / "model.json"
    write_json(model_path, joint_model_payload(K, L, results))
    return [gene_path, cpg_path, model_path]


def metric_report_payload(report: MetricReport) -> dict:
    return report.as_dict()


def write_metric_report(out_dir, report: MetricReport, layer: str) -> list[Path]:
    out = Path(out_dir)
    tsv = out / "evaluation.tsv"
    items = [("layer", layer), ("n", report.tp + report.fp + report.tn + report.fn)]
    items += [(k, v) for k, v in report.as_dict().items()]
    write_tsv(tsv, ["metric", "value"], items)
    js = out / "evaluation.json"
    write_json(js, {"layer": layer, **report.as_dict()})
    return [tsv, js]


def write_benchmark_tables(out_dir, result: BenchmarkResult) -> list[Path]:
    out = Path(out_dir)
    summary_path = out / "benchmark_summary.tsv"
    write_tsv(
        summary_path,
        ["method", "layer", "metric", "mean", "sd", "n"],
        result.summary_rows,
    )
    reps_path = out / "benchmark_replicates.tsv"
    write_tsv(
        reps_path,
        ["replicate", "method", "layer", "metric", "value"],
        result.replicate_rows,
    )
    json_path = out / "benchmark.json"
    payload = {
        "config": result.config.to_dict(),
        "methods": list(result.methods),
        "n_replicates": result.n_replicates,
        "failures": {str(k): v for k, v in result.failures.items()},
        "summary": [
            {
                "method": m, "layer": lay, "metric": met,
                "mean": mean, "sd": sd, "n": n,
            }
            for m, lay, met, mean, sd, n in result.summary_rows
        ],
    }
    write_json(json_path, payload)
    return [summary_path, reps_path, json_path]
