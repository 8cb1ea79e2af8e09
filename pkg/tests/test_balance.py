import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncodid.balance import categorical_smd, smd, standardize, table_one
from ncodid.matcher import MatchedSample

from conftest import random_dataset

finite = st.floats(-1e3, 1e3, allow_nan=False)
groups = st.lists(finite, min_size=2, max_size=30)


def expand(counts):
    """Label list from per-level counts."""
    return [lvl for lvl, k in enumerate(counts) for _ in range(k)]


def binary_labels(n_true, n):
    return [1.0] * n_true + [0.0] * (n - n_true)


# --- smd ---------------------------------------------------------------------


def test_identical_groups_zero():
    assert smd([1, 2, 3], [1, 2, 3]) == 0


def test_hand_computed_example():
    # mean_T = 0.5, var_T = 0.25, mean_C = 1, var_C = 0 -> 0.5 / sqrt(0.125)
    assert smd([0, 0, 1, 1], [1, 1, 1, 1]) == pytest.approx(0.5 / math.sqrt(0.125), abs=1e-12)
    assert smd([0, 0, 1, 1], [1, 1, 1, 1]) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_degenerate_pooled_sd():
    assert smd([2, 2], [2, 2]) == 0
    assert smd([1, 1], [2, 2]) == math.inf
    assert smd([2, 2], [1, 1]) == -math.inf


@settings(max_examples=200, deadline=None)
@given(groups, groups)
def test_antisymmetry(t, c):
    a, b = smd(t, c), smd(c, t)
    if math.isinf(a):
        assert b == -a
    else:
        assert a == pytest.approx(-b, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(groups, groups, st.floats(0.1, 10) | st.floats(-10, -0.1), st.floats(-100, 100))
def test_scale_invariance(t, c, a, b):
    base = smd(t, c)
    moved = smd([a * x + b for x in t], [a * x + b for x in c])
    if math.isfinite(base) and abs(base) < 1e6:
        # near-constant groups are ill-conditioned; compare only well-scaled cases
        if np.std(t) + np.std(c) > 1e-3:
            assert moved == pytest.approx(math.copysign(1, a) * base, rel=1e-6, abs=1e-6)


# --- categorical SMD against the published covariate table ---------------------

YEAR_TREATED = [0, 20, 48, 502, 503, 413]
YEAR_CONTROL = [372, 710, 1146, 1422, 1876, 1967]
YEAR_MATCHED = [0, 20, 48, 502, 502, 414]
TOPIC_TREATED = [77, 66, 46, 55, 140, 106, 87, 129, 62, 74, 108, 94, 87, 49, 48, 44, 41, 50, 57, 66]
TOPIC_CONTROL = [325, 392, 223, 340, 495, 458, 363, 752, 271, 465, 543, 387, 455, 289, 332, 274, 251, 296, 299, 283]


def test_year_smd_matches_published_table():
    assert categorical_smd(expand(YEAR_TREATED), expand(YEAR_CONTROL), range(6)) == pytest.approx(0.746, abs=5e-4)
    assert categorical_smd(expand(YEAR_TREATED), expand(YEAR_MATCHED), range(6)) == pytest.approx(0.002, abs=5e-4)


def test_topic_smd_matches_published_table():
    t = expand(TOPIC_TREATED)
    assert sum(TOPIC_TREATED) == 1486 and sum(TOPIC_CONTROL) == 7493
    assert categorical_smd(t, expand(TOPIC_CONTROL), range(20)) == pytest.approx(0.188, abs=5e-4)
    assert categorical_smd(t, t, range(20)) < 0.001


@pytest.mark.parametrize("name,t,c,m,before,after", [
    ("first_author_female", 87, 643, 89, 0.106, 0.006),
    ("any_author_female", 375, 2173, 361, 0.085, 0.022),
    ("no_US_author", 464, 2537, 468, 0.056, 0.006),
])
def test_binary_rows_match_published_magnitudes(name, t, c, m, before, after):
    tl, cl, ml = binary_labels(t, 1486), binary_labels(c, 7493), binary_labels(m, 1486)
    assert abs(smd(tl, cl)) == pytest.approx(before, abs=5e-4)
    assert abs(smd(tl, ml)) == pytest.approx(after, abs=5e-4)
    # a two-level categorical SMD is the magnitude of the indicator SMD
    assert categorical_smd(tl, cl) == pytest.approx(abs(smd(tl, cl)), rel=1e-9)


def test_categorical_smd_zero_for_same_distribution():
    assert categorical_smd(["a", "b", "b"], ["b", "a", "b"]) == pytest.approx(0, abs=1e-12)


# --- standardize -----------------------------------------------------------------


def test_standardize_closed_form():
    ds = random_dataset(1, 2)
    ds = type(ds)(ds.schema, tuple(
        type(r)(r.id, r.treatment, r.outcome, dict(r.covariates, x=float(i + 1), flag=5.0), r.publication_date,
                citation_counts=r.citation_counts)
        for i, r in enumerate(ds.records)
    ))
    z = standardize(ds)
    xi = z.columns.index("x")
    assert np.allclose(z.matrix[:, xi], [-1.224744871391589, 0, 1.224744871391589], atol=1e-9)
    assert "flag" in z.constant
    assert np.all(z.matrix[:, z.columns.index("flag")] == 5.0)
    topic = [j for j, col in enumerate(z.columns) if col.startswith("topic=")]
    assert len(topic) == 3
    assert np.all(z.matrix[:, topic].sum(axis=1) == 1)


# --- table one -------------------------------------------------------------------


def test_self_pairing_gives_zero_after():
    ds = random_dataset(6, 10, seed=2)
    treated = [r.id for r in ds.treated()]
    tbl = table_one(ds, MatchedSample(tuple((t, t) for t in treated)))
    assert all(r.smd_after == 0 for r in tbl.rows)
    assert tbl.group_sizes == (6, 10, 6)


def test_table_against_direct_recomputation():
    ds = random_dataset(40, 40, seed=9)
    ids = [r.id for r in ds.treated()]
    ctrl = [r.id for r in ds.controls()]
    matched = MatchedSample(tuple(zip(ids, ctrl[:40])))
    tbl = table_one(ds, matched)
    row = next(r for r in tbl.rows if r.covariate == "x")
    xt = np.array([ds[i].covariates["x"] for i in ids])
    xc = np.array([ds[i].covariates["x"] for i in ctrl])
    assert row.treated_mean == pytest.approx(xt.mean())
    assert row.smd_before == pytest.approx((xc.mean() - xt.mean()) / math.sqrt((xt.var() + xc.var()) / 2))
    levels = [r for r in tbl.rows if r.covariate == "topic" and r.level is not None]
    assert sum(r.treated_count for r in levels) == 40


def test_random_split_is_balanced():
    ds = random_dataset(0, 400, seed=4)
    rng = np.random.default_rng(0)
    ids = list(ds.ids)
    rng.shuffle(ids)
    t, c = ids[:200], ids[200:]
    flipped = type(ds)(ds.schema, tuple(
        type(r)(r.id, r.id in t, r.outcome, r.covariates, r.publication_date, citation_counts=r.citation_counts)
        for r in ds.records
    ))
    tbl = table_one(flipped, MatchedSample(tuple(zip(t, c))))
    for r in tbl.summary_rows():
        assert abs(r.smd_before) < 0.25


def test_dangling_id_raises():
    ds = random_dataset(2, 2)
    with pytest.raises(KeyError):
        table_one(ds, MatchedSample((("t000", "nope"),)))


def test_render_and_csv():
    ds = random_dataset(6, 10, seed=2)
    tbl = table_one(ds, MatchedSample(tuple(zip([r.id for r in ds.treated()], [r.id for r in ds.controls()]))))
    text = tbl.render()
    assert text.splitlines()[0].startswith("Covariate")
    assert "Treated (n=6)" in text
    assert tbl.to_csv().splitlines()[0].startswith("covariate,level")
