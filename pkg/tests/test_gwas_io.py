import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meitest.errors import ConfigError, InputError, TableParseError
from meitest.gwas_io import (CodingScheme, HarmonizedPair, Orientation, PairTable, SummaryRecord, detect_delimiter,
                             harmonize, orient, parse_summary_table, read_pairs_tsv)


def test_parse_basic_row():
    recs = parse_summary_table(b"rsid ea oa eaf beta se\nrs1 A G 0.31 0.012 0.003\n")
    assert recs == [SummaryRecord("rs1", "A", "G", 0.31, 0.012, 0.003)]


def test_parse_zero_se_is_row_error():
    with pytest.raises(TableParseError) as ei:
        parse_summary_table(b"rsid\tea\toa\teaf\tbeta\tse\nrs1\tA\tG\t0.3\t0.01\t0\n")
    assert "non-positive standard error" in str(ei.value)
    assert ei.value.row_errors[0][0] == 2


def test_parse_duplicate_named():
    text = "snp,ea,oa,beta,se\nrs1,A,G,0.1,0.01\nrs2,C,T,0.1,0.01\nrs1,A,G,0.2,0.01\n"
    with pytest.raises(TableParseError) as ei:
        parse_summary_table(io.StringIO(text))
    assert "rs1" in str(ei.value) and "duplicate" in str(ei.value)


def test_parse_missing_column_names_it():
    with pytest.raises(ConfigError, match="se"):
        parse_summary_table(b"rsid ea oa beta\nrs1 A G 0.1\n")


def test_parse_column_map_and_optional_eaf(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("ID,Allele1,Allele2,Effect,StdErr\nrs9,t,c,-0.5,0.1\n")
    recs = parse_summary_table(p, column_map={"beta": "Effect"})
    assert recs[0].effect_allele == "T" and recs[0].eaf is None and recs[0].beta == -0.5


def test_delimiter_detection_order():
    assert detect_delimiter("a\tb c,d") == "\t"
    assert detect_delimiter("a,b c") == ","
    assert detect_delimiter("a b  c") is None


def _rec(snp, ea, oa, beta, eaf=None, se=0.01):
    return SummaryRecord(snp, ea, oa, eaf, beta, se)


def test_harmonize_identity():
    pairs, rep = harmonize([_rec("rs1", "A", "G", 0.01)], [_rec("rs1", "A", "G", 0.02)])
    assert pairs[0].Gamma_hat == 0.02 and rep.kept == 1 and rep.flipped == 0


def test_harmonize_swap():
    pairs, rep = harmonize([_rec("rs1", "A", "G", 0.01)], [_rec("rs1", "G", "A", 0.02, eaf=0.6)])
    assert pairs[0].Gamma_hat == -0.02
    assert abs(pairs[0].eaf_outcome - 0.4) < 1e-15
    assert rep.flipped == 1


def test_harmonize_strand_complement():
    pairs, _ = harmonize([_rec("rs1", "A", "G", 0.01)], [_rec("rs1", "T", "C", 0.02)])
    assert pairs[0].Gamma_hat == 0.02
    pairs, _ = harmonize([_rec("rs1", "A", "G", 0.01)], [_rec("rs1", "C", "T", 0.02)])
    assert pairs[0].Gamma_hat == -0.02


def test_harmonize_palindromic_ambiguous_dropped():
    ex = [_rec("rs1", "A", "T", 0.01, eaf=0.52), _rec("rs2", "A", "G", 0.01)]
    out = [_rec("rs1", "A", "T", 0.02, eaf=0.5), _rec("rs2", "A", "G", 0.03)]
    pairs, rep = harmonize(ex, out, 0.08)
    assert [p.snp_id for p in pairs] == ["rs2"]
    assert rep.dropped == 1 and "palindromic" in rep.exclusions[0]["reason"]


def test_harmonize_palindromic_resolved_by_frequency():
    # exposure eaf 0.2; outcome reports the other strand (eaf 0.8) -> swap
    pairs, _ = harmonize([_rec("rs1", "A", "T", 0.01, eaf=0.2)], [_rec("rs1", "A", "T", 0.02, eaf=0.8)])
    assert pairs[0].Gamma_hat == -0.02
    pairs, _ = harmonize([_rec("rs1", "A", "T", 0.01, eaf=0.2)], [_rec("rs1", "A", "T", 0.02, eaf=0.22)])
    assert pairs[0].Gamma_hat == 0.02


def test_harmonize_mismatch_and_empty():
    pairs, rep = harmonize([_rec("rs1", "A", "G", 0.01), _rec("rs2", "A", "G", 0.01)],
                           [_rec("rs1", "A", "C", 0.02), _rec("rs2", "A", "G", 0.01)])
    assert len(pairs) == 1 and rep.exclusions[0] == {"snp_id": "rs1", "reason": "allele mismatch"}
    with pytest.raises(InputError):
        harmonize([_rec("rs1", "A", "G", 0.01)], [_rec("rs2", "A", "G", 0.01)])


@given(st.floats(-1, 1, allow_subnormal=False), st.booleans(), st.booleans())
def test_harmonize_preserves_magnitude(beta, swap, complement):
    ea, oa = ("G", "A") if swap else ("A", "G")
    if complement:
        ea, oa = {"A": "T", "G": "C"}[ea], {"A": "T", "G": "C"}[oa]
    pairs, _ = harmonize([_rec("x", "A", "G", 0.1)], [_rec("x", ea, oa, beta)])
    assert abs(pairs[0].Gamma_hat) == abs(beta)


def test_orient_examples():
    p = HarmonizedPair("rs1", -0.01, 0.001, 0.03, 0.002, eaf_exposure=0.7)
    assert orient([p], CodingScheme.MAJOR_ALLELE)[0].gamma_hat == -0.01
    q = orient([p], CodingScheme.NORMAL_ALLELE)[0]
    assert (q.gamma_hat, q.Gamma_hat) == (0.01, -0.03)
    assert q.orientation is Orientation.FLIPPED


def test_orient_major_tie_and_missing():
    t = PairTable.from_arrays([-0.1, 0.2], 0.01, [0.1, 0.1], 0.02, eaf=[0.5, 0.3])
    m = orient(t, CodingScheme.MAJOR_ALLELE)
    assert m.gamma_hat[0] == -0.1 and m.gamma_hat[1] == -0.2 and m.eaf[1] == 0.7
    with pytest.raises(ConfigError, match="snp2"):
        orient(PairTable.from_arrays([0.1, 0.2], 0.01, [0.1, 0.1], 0.02, eaf=[0.4, np.nan]), CodingScheme.MAJOR_ALLELE)
    # normal coding never needs frequencies
    orient(PairTable.from_arrays([0.1, -0.2], 0.01, [0.1, 0.1], 0.02), CodingScheme.NORMAL_ALLELE)


tables = st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=n, max_size=n),
    st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=n, max_size=n),
    st.lists(st.floats(0, 1), min_size=n, max_size=n),
))


@given(tables, st.sampled_from(list(CodingScheme)))
def test_orient_invariants(data, scheme):
    g, G, eaf = data
    t = PairTable.from_arrays(g, np.linspace(0.01, 0.02, len(g)), G, 0.05, eaf=eaf,
                              snp_id=[f"rs{i}" for i in range(len(g))])
    once = orient(t, scheme)
    twice = orient(once, scheme)
    for col in ("gamma_hat", "Gamma_hat", "eaf", "sigma_x", "sigma_y"):
        np.testing.assert_array_equal(getattr(once, col), getattr(twice, col))
    np.testing.assert_array_equal(once.sigma_x, t.sigma_x)
    np.testing.assert_array_equal(once.sigma_y, t.sigma_y)
    assert list(once.snp_id) == list(t.snp_id)
    np.testing.assert_array_equal(np.abs(once.gamma_hat), np.abs(t.gamma_hat))
    if scheme is CodingScheme.NORMAL_ALLELE:
        assert np.all(once.gamma_hat >= 0)
    else:
        assert np.all(once.eaf >= 0.5)


def test_pair_table_roundtrip():
    t = PairTable.from_arrays([0.1, -0.2], [0.01, 0.02], [0.3, 0.4], [0.05, 0.06], eaf=[0.3, np.nan],
                              snp_id=["a", "b"])
    t = orient(t, CodingScheme.NORMAL_ALLELE)
    buf = io.StringIO()
    t.write_tsv(buf)
    back = read_pairs_tsv(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.gamma_hat, t.gamma_hat)
    np.testing.assert_array_equal(back.flipped, t.flipped)
    assert np.isnan(back.eaf[1])
    assert [p.snp_id for p in t.to_pairs()] == ["a", "b"]
