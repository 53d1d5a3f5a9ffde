"""Single executable exposing the full workflow.

Subcommands: preprocess, simulate, fit, baseline, evaluate, benchmark,
timing. Every run writes a ``manifest.json`` recording resolved
parameters, input digests and wall-clock duration; data outputs are
byte-reproducible given identical inputs and seed, for any ``--threads``
value. Exit codes: 0 success, 1 input/validation error, 2 numerical or
convergence failure, 3 partial per-chromosome failure with the
remaining outputs written.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import fit_independent
from .dataset import (
    load_paired_dataset,
    read_expression_table,
    read_methylation_table,
    write_expression_table,
    write_methylation_table,
)
from .errors import (
    DuplicateIdError,
    FitError,
    FormatError,
    InputError,
    JointmixError,
    MappingError,
)
from .evaluate import benchmark, score_labels, simulated_dataset
from .joint_em import fit, fit_all_chromosomes
from .preprocess import (
    DEFAULT_BETA_EPS,
    DEFAULT_COUNT_THRESHOLD,
    DEFAULT_PSEUDOCOUNT,
    derive_model_inputs,
)
from .reports import (
    cpg_label_names,
    cpg_posterior_columns,
    gene_label_names,
    gene_posterior_columns,
    independent_model_payload,
    write_benchmark_tables,
    write_json,
    write_joint_results,
    write_metric_report,
    write_tsv,
)
from .simulate import SimConfig, replicate_batch, simulate, write_simulation

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, subcommand, params, input_paths, started, threads) -> None:
    payload = {
        "tool": "jointmix",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": params,
        "input_digests": {str(Path(p)): _sha256(p) for p in input_paths},
        "duration_s": round(time.perf_counter() - started, 6),
        "threads": threads,
    }
    write_json(Path(out_dir) / "manifest.json", payload)


def _prepare_out(args, filenames) -> Path:
    if not args.out:
        raise InputError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clobber = [n for n in filenames if (out / n).exists()]
    if clobber and not args.force:
        raise InputError(
            f"would overwrite {', '.join(clobber)} in {out}; pass --force to allow"
        )
    return out


def _aligned_condition_pair(path_a, path_b, reader, id_field_count):
    """Read one omics layer's two condition files and align rows/columns.

    Rows align by identifier (first column), patients by header name;
    identifier sets and fixed annotation columns must agree.
    """
    patients_a, recs_a = reader(path_a)
    patients_b, recs_b = reader(path_b)
    if set(patients_a) != set(patients_b):
        raise FormatError(f"patient columns differ between {path_a} and {path_b}")
    order = [patients_b.index(p) for p in patients_a]

    def key(rec):
        return rec.gene_id if id_field_count == 2 else rec.cpg_id

    ids_a = [key(r) for r in recs_a]
    if len(set(ids_a)) != len(ids_a):
        raise DuplicateIdError(f"duplicate identifiers in {path_a}")
    by_id = {key(r): r for r in recs_b}
    if set(ids_a) != set(by_id):
        raise FormatError(f"row sets differ between {path_a} and {path_b}")
    values_a = np.vstack([r.values for r in recs_a])
    values_b = np.vstack([by_id[i].values[order] for i in ids_a])
    for r in recs_a:
        other = by_id[key(r)]
        if r.chromosome != other.chromosome or (
            id_field_count == 3 and r.gene_id != other.gene_id
        ):
            raise FormatError(f"annotation mismatch for {key(r)!r} between condition files")
    return patients_a, recs_a, values_a, values_b


def cmd_preprocess(args) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(args, ["expression.tsv", "methylation.tsv", "manifest.json"])
    patients, gene_recs, counts_a, counts_b = _aligned_condition_pair(
        args.expression_a, args.expression_b, read_expression_table, 2
    )
    mpatients, cpg_recs, betas_a, betas_b = _aligned_condition_pair(
        args.methylation_a, args.methylation_b, read_methylation_table, 3
    )
    if set(mpatients) != set(patients):
        raise FormatError("patient columns differ between expression and methylation files")
    morder = [mpatients.index(p) for p in patients]
    betas_a = betas_a[:, morder]
    betas_b = betas_b[:, morder]

    gene_pos = {r.gene_id: i for i, r in enumerate(gene_recs)}
    keep, gene_idx = [], []
    for j, rec in enumerate(cpg_recs):
        i = gene_pos.get(rec.gene_id)
        problem = None
        if i is None:
            problem = f"CpG {rec.cpg_id!r} references unknown gene {rec.gene_id!r}"
        elif gene_recs[i].chromosome != rec.chromosome:
            problem = f"CpG {rec.cpg_id!r} chromosome differs from its gene's"
        if problem:
            if args.mode == "strict":
                raise MappingError(problem)
            logger.warning("%s; dropping it (lenient mode)", problem)
            continue
        keep.append(j)
        gene_idx.append(i)
    betas_a = betas_a[keep]
    betas_b = betas_b[keep]
    cpg_recs = [cpg_recs[j] for j in keep]

    kept_g, x, kept_c, y = derive_model_inputs(
        counts_a, counts_b, betas_a, betas_b, np.array(gene_idx, dtype=np.intp),
        count_threshold=args.count_threshold,
        pseudocount=args.pseudocount,
        beta_eps=args.beta_eps,
    )
    write_expression_table(
        out / "expression.tsv",
        [gene_recs[i].gene_id for i in kept_g],
        [gene_recs[i].chromosome for i in kept_g],
        patients,
        x,
    )
    write_methylation_table(
        out / "methylation.tsv",
        [cpg_recs[i].cpg_id for i in kept_c],
        [cpg_recs[i].gene_id for i in kept_c],
        [cpg_recs[i].chromosome for i in kept_c],
        patients,
        y,
    )
    _write_manifest(
        out,
        "preprocess",
        {
            "expression_a": str(args.expression_a),
            "expression_b": str(args.expression_b),
            "methylation_a": str(args.methylation_a),
            "methylation_b": str(args.methylation_b),
            "mode": args.mode,
            "count_threshold": args.count_threshold,
            "pseudocount": args.pseudocount,
            "beta_eps": args.beta_eps,
        },
        [args.expression_a, args.expression_b, args.methylation_a, args.methylation_b],
        t0,
        args.threads,
    )
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    pi = None
    if args.pi_file:
        pi = np.loadtxt(args.pi_file).tolist()
    cfg = SimConfig(
        n_genes=args.genes,
        n_patients=args.patients,
        case=args.case,
        pi=pi,
        seed=args.seed,
    )
    cfg.validate()
    cfg.resolve_pi()
    single = ["expression_a.tsv", "expression_b.tsv", "methylation_a.tsv",
              "methylation_b.tsv", "truth.tsv", "sim_config.json"]
    if args.replicates == 1:
        out = _prepare_out(args, single + ["manifest.json"])
        write_simulation(simulate(cfg), out)
    else:
        names = [f"rep{r:03d}" for r in range(args.replicates)]
        out = _prepare_out(args, names + ["manifest.json"])
        for r, sim in enumerate(replicate_batch(cfg, args.replicates)):
            write_simulation(sim, out / f"rep{r:03d}")
    _write_manifest(
        out,
        "simulate",
        {**cfg.to_dict(), "replicates": args.replicates},
        [args.pi_file] if args.pi_file else [],
        t0,
        args.threads,
    )
    return 0


def _fit_kwargs(args) -> dict:
    return dict(
        K=args.k,
        L=args.l,
        q=args.quantile,
        outer_tol=args.outer_tol,
        outer_max=args.outer_max,
        inner_tol=args.inner_tol,
        inner_max=args.inner_max,
    )


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(args, ["model.json", "gene_results.tsv", "cpg_results.tsv", "manifest.json"])
    ds = load_paired_dataset(args.expression, args.methylation, mode=args.mode)
    results, failures = fit_all_chromosomes(ds, threads=args.threads, **_fit_kwargs(args))
    for label in sorted(failures):
        print(f"chromosome {label} failed: {failures[label]}", file=sys.stderr)
    if results:
        write_joint_results(out, ds, results, args.k, args.l)
    _write_manifest(
        out,
        "fit",
        {"expression": str(args.expression), "methylation": str(args.methylation),
         "mode": args.mode, **_fit_kwargs(args)},
        [args.expression, args.methylation],
        t0,
        args.threads,
    )
    if failures:
        return 3 if results else 2
    return 0


def cmd_baseline(args) -> int:
    t0 = time.perf_counter()
    expression = args.layer == "expression"
    results_name = "gene_results.tsv" if expression else "cpg_results.tsv"
    out = _prepare_out(args, [results_name, "model.json", "manifest.json"])
    if expression:
        _, recs = read_expression_table(args.input)
    else:
        _, recs = read_methylation_table(args.input)

    by_chrom: dict[str, list[int]] = {}
    for i, rec in enumerate(recs):
        by_chrom.setdefault(rec.chromosome, []).append(i)

    names = gene_label_names(args.k) if expression else cpg_label_names(args.k)
    fits, failures = {}, {}
    rows_by_index = {}
    for label in sorted(by_chrom):
        idx = by_chrom[label]
        values = np.vstack([recs[i].values for i in idx])
        try:
            res = fit_independent(values, K=args.k, q=args.quantile,
                                  tol=args.tol, max_iter=args.max_iter)
        except FitError as exc:
            failures[label] = exc
            print(f"chromosome {label} failed: {exc}", file=sys.stderr)
            continue
        fits[label] = res
        for row_pos, i in enumerate(idx):
            rec = recs[i]
            post = res.resp[row_pos]
            lab = names[res.map_labels[row_pos] - 1]
            unc = res.uncertainty[row_pos]
            if expression:
                rows_by_index[i] = [rec.gene_id, rec.chromosome, *post.tolist(), lab, unc]
            else:
                rows_by_index[i] = [rec.cpg_id, rec.gene_id, rec.chromosome,
                                    *post.tolist(), lab, unc]

    if fits:
        post_cols = gene_posterior_columns(args.k) if expression else cpg_posterior_columns(args.k)
        fixed = ["gene_id", "chromosome"] if expression else ["cpg_id", "gene_id", "chromosome"]
        write_tsv(
            out / results_name,
            fixed + post_cols + ["map_label", "uncertainty"],
            [rows_by_index[i] for i in sorted(rows_by_index)],
        )
        write_json(out / "model.json", independent_model_payload(args.k, fits))
    _write_manifest(
        out,
        "baseline",
        {"input": str(args.input), "layer": args.layer, "k": args.k,
         "quantile": args.quantile, "tol": args.tol, "max_iter": args.max_iter},
        [args.input],
        t0,
        args.threads,
    )
    if failures:
        return 3 if fits else 2
    return 0


def _read_truth_table(path):
    truth: dict[str, dict[str, str]] = {"gene": {}, "cpg": {}}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["entity_id", "layer", "label"]:
            raise FormatError(f"{path}: expected header entity_id/layer/label")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns")
            entity, layer, label = parts
            if layer not in truth:
                raise FormatError(f"{path}:{lineno}: unknown layer {layer!r}")
            truth[layer][entity] = label
    return truth


def _read_predicted_labels(path, layer):
    id_col = "gene_id" if layer == "gene" else "cpg_id"
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for col in (id_col, "map_label"):
            if col not in header:
                raise FormatError(f"{path}: missing column {col!r}")
        id_pos = header.index(id_col)
        lab_pos = header.index("map_label")
        pairs = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise FormatError(f"{path}:{lineno}: wrong column count")
            pairs.append((parts[id_pos], parts[lab_pos]))
    return pairs


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(args, ["evaluation.tsv", "evaluation.json", "manifest.json"])
    truth = _read_truth_table(args.truth)[args.layer]
    pairs = _read_predicted_labels(args.predicted, args.layer)
    missing = [i for i, _ in pairs if i not in truth]
    if missing:
        raise InputError(
            f"{len(missing)} predicted ids missing from truth (first: {missing[0]!r})"
        )
    report = score_labels([truth[i] for i, _ in pairs], [lab for _, lab in pairs])
    write_metric_report(out, report, args.layer)
    _write_manifest(
        out,
        "evaluate",
        {"truth": str(args.truth), "predicted": str(args.predicted), "layer": args.layer},
        [args.truth, args.predicted],
        t0,
        args.threads,
    )
    return 0


def cmd_benchmark(args) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(
        args,
        ["benchmark_summary.tsv", "benchmark_replicates.tsv", "benchmark.json", "manifest.json"],
    )
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    cfg = SimConfig(n_genes=args.genes, n_patients=args.patients, seed=args.seed)
    result = benchmark(
        args.case, args.replicates, methods=methods, cfg=cfg, threads=args.threads
    )
    write_benchmark_tables(out, result)
    _write_manifest(
        out,
        "benchmark",
        {"case": args.case, "replicates": args.replicates, "methods": list(methods),
         "genes": args.genes, "patients": args.patients, "seed": args.seed},
        [],
        t0,
        args.threads,
    )
    if result.failures and len(result.failures) == args.replicates:
        return 2
    return 0


def timing_probe(patient_counts, base_cfg: SimConfig, repeats=1, fit_kwargs=None):
    """Simulate and fit at each patient count, reporting fit wall-clock.

    Fits run under a fixed iteration budget (same outer iterations and
    inner sweeps at every patient count) so the wall-clock reflects
    per-iteration cost rather than data-dependent convergence speed.
    Returns rows (n_patients, n_genes, n_cpgs, seconds); seconds is the
    minimum over ``repeats`` timed fits of the same dataset.
    """
    if fit_kwargs is None:
        fit_kwargs = dict(outer_max=20, outer_tol=0.0, inner_max=10, inner_tol=0.0)
    else:
        fit_kwargs = dict(fit_kwargs)
    rows = []
    for n in patient_counts:
        sim = simulate(replace(base_cfg, n_patients=int(n)))
        ds, _, _ = simulated_dataset(sim)
        best = None
        for _ in range(max(1, repeats)):
            started = time.perf_counter()
            fit(ds, **fit_kwargs)
            elapsed = time.perf_counter() - started
            best = elapsed if best is None else min(best, elapsed)
        rows.append((int(n), ds.n_genes, ds.n_cpgs, best))
    return rows


def cmd_timing(args) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(args, ["timing.tsv", "manifest.json"])
    counts = [int(s) for s in args.patients.split(",") if s.strip()]
    if not counts:
        raise InputError("--patients must list at least one patient count")
    cfg = SimConfig(n_genes=args.genes, seed=args.seed)
    rows = timing_probe(counts, cfg, repeats=args.repeats)
    write_tsv(out / "timing.tsv", ["n_patients", "n_genes", "n_cpgs", "seconds"], rows)
    _write_manifest(
        out,
        "timing",
        {"patients": counts, "genes": args.genes, "seed": args.seed,
         "repeats": args.repeats},
        [],
        t0,
        args.threads,
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="jointmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"jointmix {__version__}")

    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory (required)")
    common.add_argument("--threads", type=int, default=1, help="max worker threads")
    common.add_argument("--seed", type=int, default=0, help="base random seed")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument(
        "--log-level", default="warning",
        choices=["debug", "info", "warning", "error"], help="stderr log level",
    )

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("preprocess", parents=[common],
                       help="raw condition pairs -> log-fold changes and M-value differences")
    p.add_argument("--expression-a", required=True)
    p.add_argument("--expression-b", required=True)
    p.add_argument("--methylation-a", required=True)
    p.add_argument("--methylation-b", required=True)
    p.add_argument("--mode", choices=["strict", "lenient"], default="strict")
    p.add_argument("--count-threshold", type=int, default=DEFAULT_COUNT_THRESHOLD)
    p.add_argument("--pseudocount", type=float, default=DEFAULT_PSEUDOCOUNT)
    p.add_argument("--beta-eps", type=float, default=DEFAULT_BETA_EPS)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", parents=[common],
                       help="generate synthetic raw datasets with truth labels")
    p.add_argument("--out-dir", dest="out", help=argparse.SUPPRESS)
    p.add_argument("--case", type=int, choices=[1, 2, 3], default=1)
    p.add_argument("--pi-file", help="explicit 3x3 dependency matrix (whitespace table)")
    p.add_argument("--genes", type=int, default=500)
    p.add_argument("--patients", type=int, default=4)
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common],
                       help="fit the joint model per chromosome")
    p.add_argument("--expression", required=True)
    p.add_argument("--methylation", required=True)
    p.add_argument("--mode", choices=["strict", "lenient"], default="strict")
    p.add_argument("--k", type=int, default=3, help="gene clusters")
    p.add_argument("--l", type=int, default=3, help="CpG clusters")
    p.add_argument("--quantile", type=float, default=0.10)
    p.add_argument("--outer-tol", type=float, default=1e-5)
    p.add_argument("--outer-max", type=int, default=500)
    p.add_argument("--inner-tol", type=float, default=1e-6)
    p.add_argument("--inner-max", type=int, default=50)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("baseline", parents=[common],
                       help="independent per-layer mixture fit")
    p.add_argument("--input", required=True)
    p.add_argument("--layer", choices=["expression", "methylation"], required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--quantile", type=float, default=0.10)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predicted labels against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--predicted", required=True)
    p.add_argument("--layer", choices=["gene", "cpg"], required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common],
                       help="replicate simulations scored and aggregated")
    p.add_argument("--case", type=int, choices=[1, 2, 3], default=1)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--methods", default="joint,independent")
    p.add_argument("--genes", type=int, default=500)
    p.add_argument("--patients", type=int, default=4)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("timing", parents=[common],
                       help="fit wall-clock across patient counts")
    p.add_argument("--patients", default="4,40", help="comma-separated patient counts")
    p.add_argument("--genes", type=int, default=500)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_timing)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return 2
    except JointmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
