import numpy as np
import pytest

from jointmix.dataset import (
    CpgRecord,
    GeneRecord,
    build_paired_dataset,
    load_paired_dataset,
    read_expression_table,
    split_by_chromosome,
    write_expression_table,
)
from jointmix.errors import DuplicateIdError, FormatError, MappingError


class TestLoadPairedDataset:
    def test_well_formed_pair(self, tiny_pair_files):
        ds = load_paired_dataset(*tiny_pair_files)
        assert ds.n_genes == 3
        assert ds.n_cpgs == 5
        assert ds.n_patients == 2
        lengths = [len(ds.mapping[g.gene_id]) for g in ds.genes]
        assert lengths == [3, 2, 0]
        np.testing.assert_allclose(ds.x[0], [0.5, -0.25])
        np.testing.assert_allclose(ds.y[4], [1.0, -1.0])

    def test_orphan_cpg_strict(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        bad = tmp_path / "meth_orphan.tsv"
        bad.write_text(meth.read_text() + "c6\tGX\t1\t0.0\t0.0\n")
        with pytest.raises(MappingError):
            load_paired_dataset(expr, bad, mode="strict")

    def test_orphan_cpg_lenient_drops(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        bad = tmp_path / "meth_orphan.tsv"
        bad.write_text(meth.read_text() + "c6\tGX\t1\t0.0\t0.0\n")
        ds = load_paired_dataset(expr, bad, mode="lenient")
        assert ds.n_cpgs == 5

    def test_duplicate_gene_id(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        dup = tmp_path / "expr_dup.tsv"
        dup.write_text(expr.read_text() + "GA\t1\t9\t9\n")
        with pytest.raises(DuplicateIdError):
            load_paired_dataset(dup, meth)

    def test_patient_set_mismatch(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        bad = tmp_path / "meth_cols.tsv"
        lines = meth.read_text().splitlines()
        lines[0] = "cpg_id\tgene_id\tchromosome\tP1\tP9"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError) as exc:
            load_paired_dataset(expr, bad)
        assert "P9" in str(exc.value)

    def test_patient_alignment_by_name(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        swapped = tmp_path / "meth_swapped.tsv"
        rows = [line.split("\t") for line in meth.read_text().splitlines()]
        out = ["\t".join([r[0], r[1], r[2], r[4], r[3]]) for r in rows]
        swapped.write_text("\n".join(out) + "\n")
        ds = load_paired_dataset(expr, swapped)
        np.testing.assert_allclose(ds.y[0], [0.1, 0.2])

    def test_chromosome_mismatch_strict(self, tiny_pair_files, tmp_path):
        expr, meth = tiny_pair_files
        bad = tmp_path / "meth_chrom.tsv"
        bad.write_text(meth.read_text().replace("c4\tGB\t1", "c4\tGB\t9"))
        with pytest.raises(MappingError):
            load_paired_dataset(expr, bad)

    def test_mapping_totality(self, tiny_pair_files):
        ds = load_paired_dataset(*tiny_pair_files)
        assert sum(len(v) for v in ds.mapping.values()) == ds.n_cpgs
        assert sorted(i for v in ds.mapping.values() for i in v) == list(range(ds.n_cpgs))


class TestSplitByChromosome:
    def test_two_chromosomes(self, tiny_pair_files):
        ds = load_paired_dataset(*tiny_pair_files)
        subs = split_by_chromosome(ds)
        assert [s.genes[0].chromosome for s in subs] == ["1", "7"]
        assert [s.n_genes for s in subs] == [2, 1]
        assert [s.n_cpgs for s in subs] == [5, 0]

    def test_single_chromosome_identity(self):
        genes = [GeneRecord("g1", "3", np.array([1.0])), GeneRecord("g2", "3", np.array([2.0]))]
        cpgs = [CpgRecord("c1", "g1", "3", np.array([0.5]))]
        ds = build_paired_dataset(genes, cpgs, ["P1"])
        (sub,) = split_by_chromosome(ds)
        assert [g.gene_id for g in sub.genes] == ["g1", "g2"]
        assert [c.cpg_id for c in sub.cpgs] == ["c1"]

    def test_many_chromosomes_conserve_counts(self):
        rng = np.random.default_rng(0)
        genes = [
            GeneRecord(f"g{i}", str(1 + i % 22), rng.normal(size=2)) for i in range(66)
        ]
        ds = build_paired_dataset(genes, [], ["P1", "P2"])
        subs = split_by_chromosome(ds)
        assert len(subs) == 22
        assert sum(s.n_genes for s in subs) == 66

    def test_partition_conservation(self, tiny_pair_files):
        ds = load_paired_dataset(*tiny_pair_files)
        subs = split_by_chromosome(ds)
        gene_ids = sorted(g.gene_id for s in subs for g in s.genes)
        cpg_ids = sorted(c.cpg_id for s in subs for c in s.cpgs)
        assert gene_ids == sorted(g.gene_id for g in ds.genes)
        assert cpg_ids == sorted(c.cpg_id for c in ds.cpgs)


class TestTableFormats:
    def test_value_length_mismatch(self):
        genes = [GeneRecord("g1", "1", np.array([1.0, 2.0]))]
        with pytest.raises(FormatError):
            build_paired_dataset(genes, [], ["P1"])

    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "expr.tsv"
        values = np.array([[0.1234567890123456, -2.0], [3.0, 0.5]])
        write_expression_table(path, ["a", "b"], ["1", "2"], ["P1", "P2"], values)
        patients, genes = read_expression_table(path)
        assert patients == ["P1", "P2"]
        np.testing.assert_array_equal(np.vstack([g.values for g in genes]), values)

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "expr.tsv"
        path.write_text("gene_id\tchromosome\tP1\ng1\t1\tabc\n")
        with pytest.raises(FormatError):
            read_expression_table(path)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "expr.tsv"
        path.write_text("id\tchrom\tP1\ng1\t1\t2\n")
        with pytest.raises(FormatError):
            read_expression_table(path)
