import numpy as np
import pytest
from hypothesis import given, strategies as st

from eventface import oracles
from eventface.metrics import (
    REPORT_KEYS,
    ProtocolError,
    ScoreSet,
    compute_cmc,
    compute_eer,
    compute_roc_auc,
    compute_tar_at_far,
    format_report,
    pair_scores,
    parse_report,
    read_score_csv,
    write_score_csv,
)

scores = st.lists(st.integers(-8, 8).map(lambda v: v / 8.0), min_size=1, max_size=25)


@given(scores, scores)
def test_eer_matches_sweep(g, i):
    assert abs(compute_eer(ScoreSet(g, i)) - oracles.eer_sweep(g, i)) <= 1e-12


@given(scores, scores)
def test_auc_matches_pairwise(g, i):
    assert abs(compute_roc_auc(ScoreSet(g, i)) - oracles.auc_pairwise(g, i)) <= 1e-12


@given(scores, scores, st.sampled_from([0.01, 0.1, 0.5]))
def test_tar_matches_sweep(g, i, far):
    assert abs(compute_tar_at_far(ScoreSet(g, i), far) - oracles.tar_at_far_sweep(g, i, far)) <= 1e-12


@given(scores, scores)
def test_auc_invariant_under_monotone_transform(g, i):
    a = compute_roc_auc(ScoreSet(g, i))
    b = compute_roc_auc(ScoreSet(np.exp(5 * np.array(g)), np.exp(5 * np.array(i))))
    assert a == b


def test_perfect_and_inverted_separation():
    sep = ScoreSet([0.9, 0.8], [0.1, 0.2, 0.3])
    assert compute_eer(sep) == 0.0 and compute_roc_auc(sep) == 1.0
    assert compute_tar_at_far(sep, 0.01) == 1.0
    inv = ScoreSet([0.1, 0.2], [0.8, 0.9])
    assert compute_eer(inv) == 1.0 and compute_roc_auc(inv) == 0.0


def test_all_ties_give_half():
    s = ScoreSet([0.5] * 3, [0.5] * 4)
    assert compute_roc_auc(s) == 0.5


def test_empty_class_rejected():
    with pytest.raises(ValueError):
        compute_eer(ScoreSet([], [0.1]))


def test_cmc_matches_loop(rng):
    for _ in range(20):
        gal, gl = rng.normal(size=(6, 4)), rng.integers(0, 3, 6)
        probes, pl = rng.normal(size=(5, 4)), rng.choice(gl, 5)
        np.testing.assert_allclose(compute_cmc(gal, gl, probes, pl, 4), oracles.cmc_loop(gal, gl, probes, pl, 4))


def test_cmc_properties(rng):
    gal, gl = rng.normal(size=(5, 3)), np.arange(5)
    cmc = compute_cmc(gal, gl, gal, gl, 5)
    assert cmc[0] == 1.0 and np.all(np.diff(cmc) >= 0)
    with pytest.raises(ProtocolError):
        compute_cmc(gal, gl, gal[:1], [9])


def test_pair_scores_counts(rng):
    labels = np.array([0, 0, 1, 1, 1])
    s = pair_scores(rng.normal(size=(5, 3)), labels)
    assert len(s.genuine) == 1 + 3 and len(s.impostor) == 6


def test_score_csv_roundtrip_exact(rng):
    s = ScoreSet(rng.normal(size=7), rng.normal(size=4))
    back = read_score_csv(write_score_csv(s))
    assert np.array_equal(back.genuine, s.genuine) and np.array_equal(back.impostor, s.impostor)


def test_report_roundtrip_and_keys():
    m = {k: 0.1 * n + 1e-17 for n, k in enumerate(REPORT_KEYS)}
    text = format_report(m)
    assert parse_report(text) == m
    with pytest.raises(KeyError):
        format_report({"eer": 0.1})


@pytest.mark.parametrize("far", [0.0, 1.0, -0.1])
def test_tar_far_range(far):
    with pytest.raises(ValueError):
        compute_tar_at_far(ScoreSet([0.5], [0.1]), far)


@given(scores, scores)
def test_auc_swap_symmetry(g, i):
    assert abs(compute_roc_auc(ScoreSet(g, i)) + compute_roc_auc(ScoreSet(i, g)) - 1.0) <= 1e-12
