import datetime as dt

import numpy as np
import pytest

from ncodid.dataset import (
    BINARY,
    CATEGORICAL,
    FINE_BALANCE,
    MATCH_DISTANCE,
    NEAR_EXACT,
    NUMERIC,
    Covariate,
    CovariateSchema,
    Dataset,
    SubmissionRecord,
)
from ncodid.matcher import MatchedSample


def small_schema():
    md = frozenset({MATCH_DISTANCE})
    return CovariateSchema((
        Covariate("x", NUMERIC, md),
        Covariate("flag", BINARY, md),
        Covariate("year", CATEGORICAL, frozenset({NEAR_EXACT}), categories=("2019", "2020")),
        Covariate("topic", CATEGORICAL, frozenset({FINE_BALANCE}), categories=("a", "b", "c")),
    ))


def make_dataset(rows, schema=None):
    """rows: (id, treatment, outcome, covariate dict, counts dict)."""
    schema = schema or small_schema()
    recs = []
    for rid, a, y, covs, counts in rows:
        recs.append(SubmissionRecord(rid, bool(a), bool(y), covs, dt.date(int(covs.get("year", 2020)), 3, 1),
                                     citation_counts=counts))
    return Dataset(schema, tuple(recs))


def random_dataset(n_treated, n_control, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_treated + n_control):
        a = i < n_treated
        covs = {
            "x": float(rng.normal(0.5 if a else 0.0)),
            "flag": float(rng.integers(0, 2)),
            "year": str(rng.choice(["2019", "2020"])),
            "topic": str(rng.choice(["a", "b", "c"])),
        }
        c1 = int(rng.poisson(3))
        c2 = c1 + int(rng.poisson(2))
        counts = {1: c1, 2: c2, 3: c2 + int(rng.poisson(2))}
        rows.append((f"{'t' if a else 'c'}{i:03d}", a, rng.random() < 0.4, covs, counts))
    return make_dataset(rows)


@pytest.fixture
def toy_dataset():
    return random_dataset(12, 30, seed=3)


def pairs_sample(y_t, y_c, n_t=None, n_c=None):
    """Matched sample plus value maps built from per-pair arrays."""
    pairs = tuple((f"t{i}", f"c{i}") for i in range(len(y_t)))
    outcomes = {f"t{i}": v for i, v in enumerate(y_t)} | {f"c{i}": v for i, v in enumerate(y_c)}
    nco = None
    if n_t is not None:
        nco = {f"t{i}": v for i, v in enumerate(n_t)} | {f"c{i}": v for i, v in enumerate(n_c)}
    return MatchedSample(pairs), outcomes, nco
