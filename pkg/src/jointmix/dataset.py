"""Paired gene/CpG tables and their nested mapping.

A dataset couples a gene-level matrix (one row per gene, one column per
patient) with a CpG-level matrix whose rows each belong to exactly one
gene. Values may be raw (counts / beta values) or model-ready
(log-fold changes / M-value differences); this module only cares about
the structure, not the scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DuplicateIdError, FormatError, MappingError

logger = logging.getLogger(__name__)

EXPRESSION_FIXED_COLUMNS = ("gene_id", "chromosome")
METHYLATION_FIXED_COLUMNS = ("cpg_id", "gene_id", "chromosome")


@dataclass(frozen=True)
class GeneRecord:
    """One gene: identifier, chromosome label, and per-patient values."""

    gene_id: str
    chromosome: str
    values: np.ndarray


@dataclass(frozen=True)
class CpgRecord:
    """One CpG site, attached to its parent gene."""

    cpg_id: str
    gene_id: str
    chromosome: str
    values: np.ndarray


@dataclass
class PairedDataset:
    """Immutable container for aligned gene and CpG tables.

    ``mapping`` sends each gene_id to the (ordered) indices of its CpGs
    in ``cpgs``; genes without CpGs map to an empty list. Instances are
    treated as read-only after construction and are safe to share
    across threads.
    """

    genes: list[GeneRecord]
    cpgs: list[CpgRecord]
    patients: list[str]
    mapping: dict[str, list[int]] = field(repr=False)

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def n_cpgs(self) -> int:
        return len(self.cpgs)

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @cached_property
    def x(self) -> np.ndarray:
        """Gene value matrix, shape (G, N)."""
        if not self.genes:
            return np.zeros((0, self.n_patients))
        return np.vstack([g.values for g in self.genes]).astype(float)

    @cached_property
    def y(self) -> np.ndarray:
        """CpG value matrix, shape (C, N)."""
        if not self.cpgs:
            return np.zeros((0, self.n_patients))
        return np.vstack([c.values for c in self.cpgs]).astype(float)

    @cached_property
    def cpg_gene_idx(self) -> np.ndarray:
        """For each CpG, the index of its parent gene in ``genes``."""
        pos = {g.gene_id: i for i, g in enumerate(self.genes)}
        return np.array([pos[c.gene_id] for c in self.cpgs], dtype=np.intp)

    @cached_property
    def cpg_counts(self) -> np.ndarray:
        """Number of CpGs per gene (C_g), length G."""
        counts = np.zeros(self.n_genes, dtype=np.intp)
        np.add.at(counts, self.cpg_gene_idx, 1)
        return counts

    def gene_cpg_indices(self, gene_index: int) -> list[int]:
        return self.mapping[self.genes[gene_index].gene_id]


def build_paired_dataset(genes, cpgs, patients, mode="strict") -> PairedDataset:
    """Validate records and assemble a :class:`PairedDataset`.

    ``mode`` controls what happens to a CpG whose gene_id has no gene
    record (or whose chromosome disagrees with its gene): ``strict``
    raises :class:`MappingError`, ``lenient`` drops it with a warning.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown mode {mode!r}")
    n = len(patients)
    if n < 1:
        raise FormatError("dataset must have at least one patient column")
    if not genes:
        raise FormatError("dataset must have at least one gene row")

    seen = set()
    for g in genes:
        if g.gene_id in seen:
            raise DuplicateIdError(f"duplicate gene_id {g.gene_id!r}")
        seen.add(g.gene_id)
        if len(g.values) != n:
            raise FormatError(
                f"gene {g.gene_id!r} has {len(g.values)} values, expected {n}"
            )
    by_id = {g.gene_id: g for g in genes}

    kept_cpgs = []
    seen_cpg = set()
    for c in cpgs:
        if c.cpg_id in seen_cpg:
            raise DuplicateIdError(f"duplicate cpg_id {c.cpg_id!r}")
        seen_cpg.add(c.cpg_id)
        if len(c.values) != n:
            raise FormatError(
                f"CpG {c.cpg_id!r} has {len(c.values)} values, expected {n}"
            )
        parent = by_id.get(c.gene_id)
        problem = None
        if parent is None:
            problem = f"CpG {c.cpg_id!r} references unknown gene_id {c.gene_id!r}"
        elif parent.chromosome != c.chromosome:
            problem = (
                f"CpG {c.cpg_id!r} on chromosome {c.chromosome!r} but its gene "
                f"{c.gene_id!r} is on {parent.chromosome!r}"
            )
        if problem is not None:
            if mode == "strict":
                raise MappingError(problem)
            logger.warning("%s; dropping it (lenient mode)", problem)
            continue
        kept_cpgs.append(c)

    mapping: dict[str, list[int]] = {g.gene_id: [] for g in genes}
    for i, c in enumerate(kept_cpgs):
        mapping[c.gene_id].append(i)
    return PairedDataset(genes=list(genes), cpgs=kept_cpgs, patients=list(patients), mapping=mapping)


def _parse_table(path, fixed_columns):
    """Parse a TSV with fixed leading columns followed by patient columns."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise FormatError(f"{path}: empty file")
        cols = header.split("\t")
        k = len(fixed_columns)
        if tuple(cols[:k]) != tuple(fixed_columns):
            raise FormatError(
                f"{path}: header must start with {list(fixed_columns)}, got {cols[:k]}"
            )
        patients = cols[k:]
        if not patients:
            raise FormatError(f"{path}: no patient columns in header")
        if len(set(patients)) != len(patients):
            raise FormatError(f"{path}: duplicate patient column names")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != k + len(patients):
                raise FormatError(
                    f"{path}:{lineno}: expected {k + len(patients)} columns, got {len(parts)}"
                )
            try:
                values = np.array([float(v) for v in parts[k:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            rows.append((parts[:k], values))
    return patients, rows


def read_expression_table(path):
    """Read an expression TSV: gene_id, chromosome, then patient columns."""
    patients, rows = _parse_table(path, EXPRESSION_FIXED_COLUMNS)
    genes = [GeneRecord(gene_id=f[0], chromosome=f[1], values=v) for f, v in rows]
    return patients, genes


def read_methylation_table(path):
    """Read a methylation TSV: cpg_id, gene_id, chromosome, then patients."""
    patients, rows = _parse_table(path, METHYLATION_FIXED_COLUMNS)
    cpgs = [CpgRecord(cpg_id=f[0], gene_id=f[1], chromosome=f[2], values=v) for f, v in rows]
    return patients, cpgs


def load_paired_dataset(expression_path, methylation_path, mode="strict") -> PairedDataset:
    """Load and pair the two tables, aligning patients by header name.

    Patient columns are matched by name, not position; the methylation
    columns are reordered to the expression order. Disjoint or unequal
    header sets are a format error.
    """
    expr_patients, genes = read_expression_table(expression_path)
    meth_patients, cpgs = read_methylation_table(methylation_path)
    if set(expr_patients) != set(meth_patients):
        missing = sorted(set(expr_patients) ^ set(meth_patients))
        raise FormatError(
            f"patient columns differ between {expression_path} and {methylation_path}: {missing}"
        )
    if meth_patients != expr_patients:
        order = [meth_patients.index(p) for p in expr_patients]
        cpgs = [
            CpgRecord(c.cpg_id, c.gene_id, c.chromosome, c.values[order]) for c in cpgs
        ]
    return build_paired_dataset(genes, cpgs, expr_patients, mode=mode)


def split_by_chromosome(ds: PairedDataset) -> list[PairedDataset]:
    """Partition into one sub-dataset per chromosome, genes keeping their CpGs.

    Sub-datasets are returned in sorted chromosome-label order; within
    each, records keep their input order. Concatenating the outputs
    reproduces the input record multiset exactly.
    """
    labels = sorted({g.chromosome for g in ds.genes})
    out = []
    for label in labels:
        genes = [g for g in ds.genes if g.chromosome == label]
        ids = {g.gene_id for g in genes}
        cpgs = [c for c in ds.cpgs if c.gene_id in ids]
        out.append(build_paired_dataset(genes, cpgs, ds.patients, mode="strict"))
    return out


def _format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if f.is_integer():
        return str(int(f))
    return repr(f)


def write_expression_table(path, gene_ids, chromosomes, patients, values) -> None:
    """Write an expression TSV; float values use shortest round-trip form."""
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(EXPRESSION_FIXED_COLUMNS) + "\t" + "\t".join(patients) + "\n")
        for i, gid in enumerate(gene_ids):
            row = [gid, chromosomes[i]] + [_format_value(v) for v in values[i]]
            fh.write("\t".join(row) + "\n")


def write_methylation_table(path, cpg_ids, gene_ids, chromosomes, patients, values) -> None:
    """Write a methylation TSV; float values use shortest round-trip form."""
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(METHYLATION_FIXED_COLUMNS) + "\t" + "\t".join(patients) + "\n")
        for i, cid in enumerate(cpg_ids):
            row = [cid, gene_ids[i], chromosomes[i]] + [_format_value(v) for v in values[i]]
            fh.write("\t".join(row) + "\n")
