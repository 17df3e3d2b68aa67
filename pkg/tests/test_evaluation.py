import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from perfalign.dtw import WarpPath
from perfalign.errors import Empty
from perfalign.evaluation import (ErrorSequence, betainc, ecdf, ecdf_at, error_sequence, f_sf, one_way_anova,
                                  rank_alignments, summarize, write_ranking)


def test_error_sequence_identity_path_and_directions():
    n = 100
    tx = (np.arange(n) + 0.5) * 0.1
    ty = tx * 1.1
    path = WarpPath(np.stack([np.arange(n), np.arange(n)], axis=1), 0.0)
    gx = np.array([1.0, 2.0, 3.0])
    gy = gx * 1.1 + np.array([0.0, 0.02, -0.03])
    fwd = error_sequence(gx, gy, path, tx, ty, "X_TO_Y")
    back = error_sequence(gx, gy, path, tx, ty, "Y_TO_X")
    np.testing.assert_allclose(fwd.errors, [0.0, -20.0, 30.0], atol=0.11 * 1000 / 2)
    assert fwd.direction == "X_TO_Y" and back.direction == "Y_TO_X"
    assert np.all(np.abs(back.errors) <= 60)


def test_summarize():
    assert summarize(np.array([-3.0, 1.0, 2.0])) == (2.0, 3.0, 2.0)
    with pytest.raises(Empty):
        summarize(np.array([]))


def _seq(values, digest, direction="X_TO_Y"):
    return ErrorSequence(np.asarray(values, float), direction, ("a", "b"), digest)


def test_ranking_pools_thresholds_and_breaks_ties():
    seqs = [_seq([10, 10], "b"), _seq([10, 10], "b", "Y_TO_X"),
            _seq([10, 10], "a"), _seq([10, 10], "a", "Y_TO_X"),
            _seq([1, 1], "c"), _seq([1, 5000], "c", "Y_TO_X"),
            _seq([2, 2], "d"), _seq([30, 30], "d", "Y_TO_X")]
    rep = rank_alignments(seqs, 5000.0, 10)
    assert [e.config_digest for e in rep.entries] == ["a", "b", "d"]
    assert [e.config_digest for e in rep.excluded] == ["c"]
    assert rep.entries[2].mean_abs_ms == 16.0
    assert rep.entries[0].n == 4
    assert rank_alignments(seqs, 5000.0, 1).entries[0].config_digest == "a"


def test_no_survivors_is_valid(tmp_path):
    rep = rank_alignments([_seq([9000], "x")], 5000.0, 10)
    assert rep.no_survivors
    write_ranking(tmp_path / "r.csv", {"a__b": rep})
    assert "a__b" in (tmp_path / "r.csv").read_text()


@given(st.lists(st.tuples(st.floats(0, 1e4), st.sampled_from("pqrstu")), min_size=1, max_size=60),
       st.integers(1, 6))
def test_ranking_contracts(items, k):
    seqs = [_seq([v], d) for v, d in items]
    rep = rank_alignments(seqs, 5000.0, k)
    rep.check()
    again = rank_alignments(list(reversed(seqs)), 5000.0, k)
    assert [e.config_digest for e in rep.entries] == [e.config_digest for e in again.entries]


@pytest.mark.parametrize("a, b, x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.7), (10.0, 200.0, 0.05), (1.0, 1.0, 0.0),
                                     (50.0, 40.0, 0.55), (3.0, 0.5, 1.0)])
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), abs=1e-12)


@pytest.mark.parametrize("f, d1, d2", [(1.5, 1, 4), (0.2, 3, 100), (12.0, 9, 5000), (3.0, 2, 2)])
def test_f_sf_matches_scipy(f, d1, d2):
    assert f_sf(f, d1, d2) == pytest.approx(scipy.stats.f.sf(f, d1, d2), abs=1e-10)


def test_anova_matches_scipy_and_degenerate_cases():
    rng = np.random.default_rng(0)
    groups = [rng.normal(m, 1.0, n) for m, n in [(0, 30), (0.3, 40), (0.1, 25)]]
    f, p = one_way_anova(groups)
    ref = scipy.stats.f_oneway(*groups)
    assert f == pytest.approx(ref.statistic, rel=1e-10)
    assert p == pytest.approx(ref.pvalue, abs=1e-10)
    assert one_way_anova([[1, 1], [2, 2]]) == (np.inf, 0.0)
    assert one_way_anova([[1.0, 2.0], [2.0, 1.0]]) == (0.0, 1.0)
    with pytest.raises(ValueError):
        one_way_anova([[1.0, 2.0]])


@given(st.lists(st.lists(st.floats(-100, 100), min_size=2, max_size=10), min_size=2, max_size=5))
def test_anova_invariant_to_group_order(groups):
    assert one_way_anova(groups) == one_way_anova(groups[::-1])


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=200))
def test_ecdf_contract(values):
    curve = ecdf(values)
    xs = [c[0] for c in curve]
    fr = [c[1] for c in curve]
    assert xs == sorted(set(values))
    assert all(b > a for a, b in zip(fr, fr[1:]))
    assert fr[-1] == 1.0
    assert ecdf_at(values, xs[-1]) == 1.0
