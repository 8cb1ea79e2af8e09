import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncodid._flow import FlowNetwork, InfeasibleFlow
from ncodid.balance import standardize
from ncodid.matcher import (
    COST_SCALE,
    DistanceMatrix,
    MatchedSample,
    MatchingInfeasible,
    MatchSpec,
    brute_force_matching,
    build_distance,
    match_dataset,
    solve_matching,
    verify_balance,
)

from conftest import random_dataset


def enumerate_oracle(cost, cats=None, targets=None):
    """(deviation, scaled cost) minimum over every injective assignment."""
    scaled = np.where(np.isfinite(cost), np.round(cost * COST_SCALE), -1).astype(np.int64)
    n_t, n_c = cost.shape
    best = None
    for perm in itertools.permutations(range(n_c), n_t):
        if any(scaled[i, j] < 0 for i, j in enumerate(perm)):
            continue
        total = int(sum(scaled[i, j] for i, j in enumerate(perm)))
        dev = 0
        if cats is not None:
            got = Counter(cats[j] for j in perm)
            dev = sum(abs(got.get(k, 0) - targets.get(k, 0)) for k in set(got) | set(targets))
        key = (dev, total)
        if best is None or key < best:
            best = key
    return best


def check_valid(ms, n_t):
    assert len(ms) == n_t
    assert len(set(ms.treated_ids)) == n_t
    assert len(set(ms.control_ids)) == n_t


# --- flow solver ---------------------------------------------------------------


def test_flow_network_small():
    g = FlowNetwork(4)
    a = g.add_arc(0, 1, 1, 1)
    g.add_arc(0, 2, 1, 5)
    g.add_arc(1, 3, 1, 1)
    g.add_arc(2, 3, 1, 1)
    g.add_arc(1, 2, 1, 0)
    assert g.min_cost_flow(0, 3, 2) == 8
    assert g.flow_on(a) == 1
    with pytest.raises(InfeasibleFlow):
        FlowNetwork(2).min_cost_flow(0, 1, 1)


# --- small exact instances ------------------------------------------------------


def test_single_pair():
    ms = solve_matching(np.array([[0.7]]))
    assert ms.pairs == (("t0", "c0"),)
    assert ms.total_cost == pytest.approx(0.7)


def test_two_by_two_hand_enumeration():
    for fn in (solve_matching, brute_force_matching):
        ms = fn(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert ms.pairs == (("t0", "c0"), ("t1", "c1"))
        assert ms.total_cost == 2


def test_three_by_five_against_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(20):
        cost = rng.random((3, 5))
        ms = solve_matching(cost)
        assert (0, ms.cost_units) == enumerate_oracle(cost)
        assert brute_force_matching(cost).cost_units == ms.cost_units


def test_infeasible_instances():
    with pytest.raises(MatchingInfeasible):
        brute_force_matching(np.ones((2, 1)))
    with pytest.raises(MatchingInfeasible) as err:
        solve_matching(np.ones((2, 1)))
    with pytest.raises(MatchingInfeasible) as err:
        solve_matching(np.array([[1.0, 2.0], [math.inf, math.inf]]))
    assert err.value.unmatched_ids == ("t1",)


def test_brute_force_size_limit():
    with pytest.raises(ValueError):
        brute_force_matching(np.ones((9, 10)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 2**31 - 1), st.booleans())
def test_fine_balance_against_enumeration(n_t, extra, seed, forbid):
    rng = np.random.default_rng(seed)
    n_c = n_t + extra
    cost = rng.random((n_t, n_c)).round(3)
    if forbid:
        cost[rng.random((n_t, n_c)) < 0.2] = math.inf
    cats = [str(c) for c in rng.integers(0, 3, n_c)]
    targets = {str(k): int(v) for k, v in Counter(rng.integers(0, 3, n_t)).items()}
    want = enumerate_oracle(cost, cats, targets)
    if want is None:
        with pytest.raises(MatchingInfeasible):
            solve_matching(cost, targets, control_categories=cats)
        return
    for method in ("assignment", "flow"):
        ms = solve_matching(cost, targets, control_categories=cats, method=method)
        check_valid(ms, n_t)
        assert (ms.fine_balance_deviation, ms.cost_units) == want
    bf = brute_force_matching(cost, targets, control_categories=cats)
    assert (bf.fine_balance_deviation, bf.cost_units) == want


def test_fine_balance_beats_distance():
    # the cheap control has the wrong category
    cost = np.array([[0.0, 5.0]])
    ms = solve_matching(cost, {"b": 1}, control_categories=["a", "b"])
    assert ms.pairs == (("t0", "c1"),) and ms.fine_balance_deviation == 0


def test_deterministic_repeat():
    rng = np.random.default_rng(1)
    cost = rng.integers(0, 3, (6, 9)).astype(float)
    assert solve_matching(cost) == solve_matching(cost)


# --- distance ---------------------------------------------------------------------


def test_distance_against_per_pair_loop():
    ds = random_dataset(5, 5, seed=8)
    spec = MatchSpec(("x", "flag"), (("year", 7.0),), "topic")
    dm = build_distance(ds, spec)
    z = standardize(ds, ["x", "flag"])
    pos = {rid: i for i, rid in enumerate(z.ids)}
    for i, t in enumerate(dm.treated_ids):
        for j, c in enumerate(dm.control_ids):
            d = math.sqrt(sum((z.matrix[pos[t], k] - z.matrix[pos[c], k]) ** 2 for k in range(2)))
            if ds[t].covariates["year"] != ds[c].covariates["year"]:
                d += 7.0
            assert dm.values[i, j] == pytest.approx(d, abs=1e-12)
    assert list(dm.control_categories) == [ds[c].covariates["topic"] for c in dm.control_ids]


def test_rows_differing_only_in_near_exact_cost_the_penalty():
    ds = random_dataset(1, 1, seed=0)
    t, c = ds.records
    same = dict(t.covariates, year="2020")
    other = dict(t.covariates, year="2019")
    ds = type(ds)(ds.schema, (
        type(t)(t.id, True, t.outcome, same, t.publication_date, citation_counts=t.citation_counts),
        type(c)(c.id, False, c.outcome, other, c.publication_date, citation_counts=c.citation_counts),
    ))
    dm = build_distance(ds, MatchSpec(("x", "flag"), (("year", 3.5),)))
    assert dm.values[0, 0] == pytest.approx(3.5, abs=1e-12)
    dm0 = build_distance(ds, MatchSpec(("x", "flag")))
    assert dm0.values[0, 0] == 0


def test_caliper_forbids_and_reports():
    ds = random_dataset(3, 3, seed=1)
    with pytest.raises(MatchingInfeasible):
        build_distance(ds, MatchSpec(("x",), caliper=1e-9))


def test_monotone_penalty():
    ds = random_dataset(15, 30, seed=12)
    mismatches = []
    for w in (0.01, 0.5, 2.0, 50.0):
        ms = match_dataset(ds, MatchSpec(("x", "flag"), (("year", w),)))
        mismatches.append(sum(ds[t].covariates["year"] != ds[c].covariates["year"] for t, c in ms.pairs))
    assert mismatches == sorted(mismatches, reverse=True)


def test_match_dataset_balances_and_serializes():
    ds = random_dataset(20, 60, seed=4)
    ms = match_dataset(ds)
    check_valid(ms, 20)
    assert set(ms.treated_ids) == {r.id for r in ds.treated()}
    assert ms.fine_balance_deviation == 0
    assert MatchedSample.from_json(ms.to_json()) == ms
    assert MatchedSample.from_csv(ms.to_csv()).pairs == ms.pairs
    rep = verify_balance(ds, ms)
    assert rep.fine_balance_deviation == 0
    assert all(v == 0 for v in rep.category_deviation.values())


def test_mismatched_pairs_flagged():
    ds = random_dataset(20, 60, seed=4)
    treated = sorted((r for r in ds.treated()), key=lambda r: r.covariates["x"])
    controls = sorted((r for r in ds.controls()), key=lambda r: r.covariates["x"])
    worst = MatchedSample(tuple((t.id, c.id) for t, c in zip(treated, controls[:20])))
    assert "x" in verify_balance(ds, worst).flagged


def test_matching_reduces_mean_abs_smd():
    from ncodid.dgp import DgpConfig, generate

    ds, _ = generate(DgpConfig(n_units=600, seed=2))
    rep = verify_balance(ds, match_dataset(ds))
    rows = rep.table.summary_rows()
    assert np.mean([abs(r.smd_after) for r in rows]) < np.mean([abs(r.smd_before) for r in rows])


def test_distance_matrix_scaling():
    dm = DistanceMatrix(np.array([[0.1234567, math.inf]]), ("t",), ("a", "b"))
    assert dm.scaled().tolist() == [[123457, -1]]
