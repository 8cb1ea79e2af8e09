"""Optimal 1:1 treated-control matching with near-exact penalties and fine balance.

The matching problem is a min-cost flow: source -> treated -> control ->
fine-balance category -> sink. Each category node has a free arc with
capacity equal to its target count and an overflow arc whose cost exceeds
any achievable distance total. That makes the objective lexicographic:
first the fine-balance deviation, then the summed distance.

``solve_matching`` solves that network exactly as a (sparse) assignment
problem; ``method="flow"`` runs the explicit network through an integer
successive-shortest-path solver instead. Costs are scaled to integers at
``COST_SCALE`` so both routes, and :func:`brute_force_matching`, agree
bit-for-bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching, min_weight_full_bipartite_matching
from scipy.spatial.distance import cdist

from ._flow import FlowNetwork, InfeasibleFlow
from .balance import BalanceTable, standardize, table_one
from .dataset import (
    BINARY,
    CATEGORICAL,
    FINE_BALANCE,
    MATCH_DISTANCE,
    NEAR_EXACT,
    CovariateSchema,
    Dataset,
)

COST_SCALE = 1_000_000
DEFAULT_PENALTY_FACTOR = 1000.0
BRUTE_FORCE_MAX_TREATED = 8
BRUTE_FORCE_MAX_CONTROLS = 16


class MatchingInfeasible(ValueError):
    """No perfect matching of the treated units exists."""

    def __init__(self, message: str, unmatched_ids: Sequence[str] = ()):
        self.unmatched_ids = tuple(unmatched_ids)
        if self.unmatched_ids:
            shown = ", ".join(self.unmatched_ids[:10])
            more = "" if len(self.unmatched_ids) <= 10 else f" (+{len(self.unmatched_ids) - 10} more)"
            message = f"{message}; unmatched treated: {shown}{more}"
        super().__init__(message)


@dataclass(frozen=True)
class MatchSpec:
    """What the distance is built from.

    ``near_exact`` holds ``(covariate, penalty per unit mismatch)``; a
    ``None`` penalty resolves to ``1000 x`` the largest finite numeric
    distance.
    """

    distance_covariates: tuple[str, ...]
    near_exact: tuple[tuple[str, float | None], ...] = ()
    fine_balance: str | None = None
    caliper: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "distance_covariates", tuple(self.distance_covariates))
        object.__setattr__(
            self, "near_exact", tuple((str(n), None if w is None else float(w)) for n, w in self.near_exact)
        )
        for name, weight in self.near_exact:
            if weight is not None and not weight > 0:
                raise ValueError(f"near-exact penalty for {name!r} must be positive, got {weight}")
        if self.caliper is not None and not self.caliper > 0:
            raise ValueError(f"caliper must be positive, got {self.caliper}")

    @classmethod
    def from_schema(cls, schema: CovariateSchema, caliper: float | None = None) -> "MatchSpec":
        return cls(
            distance_covariates=schema.with_role(MATCH_DISTANCE),
            near_exact=tuple((n, None) for n in schema.with_role(NEAR_EXACT)),
            fine_balance=schema.fine_balance,
            caliper=caliper,
        )

    def validate(self, schema: CovariateSchema) -> None:
        for name in self.distance_covariates:
            if name not in schema:
                raise ValueError(f"distance covariate {name!r} not in schema")
            if schema[name].kind == CATEGORICAL:
                raise ValueError(f"distance covariate {name!r} is categorical")
        for name, _ in self.near_exact:
            if name not in schema:
                raise ValueError(f"near-exact covariate {name!r} not in schema")
        if self.fine_balance is not None:
            if self.fine_balance not in schema:
                raise ValueError(f"fine-balance covariate {self.fine_balance!r} not in schema")
            if schema[self.fine_balance].kind not in (CATEGORICAL, BINARY):
                raise ValueError(f"fine-balance covariate {self.fine_balance!r} must be discrete")

    def without(self, names: Sequence[str]) -> "MatchSpec":
        drop = set(names)
        return MatchSpec(
            tuple(n for n in self.distance_covariates if n not in drop),
            tuple((n, w) for n, w in self.near_exact if n not in drop),
            None if self.fine_balance in drop else self.fine_balance,
            self.caliper,
        )

    def to_dict(self) -> dict:
        return {
            "distance_covariates": list(self.distance_covariates),
            "near_exact": [[n, w] for n, w in self.near_exact],
            "fine_balance": self.fine_balance,
            "caliper": self.caliper,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MatchSpec":
        return cls(
            tuple(d.get("distance_covariates", ())),
            tuple((n, w) for n, w in d.get("near_exact", ())),
            d.get("fine_balance"),
            d.get("caliper"),
        )


@dataclass(frozen=True)
class DistanceMatrix:
    """Treated x control costs; ``inf`` marks forbidden pairs."""

    values: np.ndarray
    treated_ids: tuple[str, ...]
    control_ids: tuple[str, ...]
    treated_categories: tuple | None = None
    control_categories: tuple | None = None
    penalties: Mapping[str, float] = field(default_factory=dict)
    spec: MatchSpec | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def scaled(self) -> np.ndarray:
        """Integer costs at ``COST_SCALE`` resolution; forbidden entries are -1."""
        finite = np.isfinite(self.values)
        out = np.full(self.values.shape, -1, dtype=np.int64)
        out[finite] = np.rint(self.values[finite] * COST_SCALE).astype(np.int64)
        return out


@dataclass(frozen=True)
class MatchedSample:
    pairs: tuple[tuple[str, str], ...]
    spec: MatchSpec | None = None
    total_cost: float = 0.0
    fine_balance_deviation: int = 0
    cost_units: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((str(t), str(c)) for t, c in self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def treated_ids(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.pairs)

    @property
    def control_ids(self) -> tuple[str, ...]:
        return tuple(c for _, c in self.pairs)

    def restrict(self, keep) -> "MatchedSample":
        """Pairs for which ``keep(treated_id, control_id)`` is true."""
        return MatchedSample(
            tuple(p for p in self.pairs if keep(*p)), self.spec, math.nan, self.fine_balance_deviation
        )

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "spec": self.spec.to_dict() if self.spec else None,
            "total_cost": self.total_cost,
            "cost_units": self.cost_units,
            "fine_balance_deviation": self.fine_balance_deviation,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MatchedSample":
        spec = d.get("spec")
        return cls(
            tuple(tuple(p) for p in d["pairs"]),
            MatchSpec.from_dict(spec) if spec else None,
            float(d.get("total_cost", math.nan)) if d.get("total_cost") is not None else math.nan,
            int(d.get("fine_balance_deviation", 0)),
            int(d.get("cost_units", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MatchedSample":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["treated_id", "control_id"])
        w.writerows(self.pairs)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MatchedSample":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["treated_id", "control_id"]:
            raise ValueError("matched-pair CSV must have header treated_id,control_id")
        return cls(tuple((r[0].strip(), r[1].strip()) for r in rows[1:] if r))


def build_distance(dataset: Dataset, spec: MatchSpec) -> DistanceMatrix:
    """L2 distance on standardized covariates plus near-exact mismatch penalties.

    Standardization uses the whole ``dataset`` (treated and controls).
    Categorical near-exact covariates cost ``penalty`` per disagreement;
    numeric ones cost ``penalty * |difference|``.
    """
    spec.validate(dataset.schema)
    treated = [r.id for r in dataset.records if r.treatment]
    controls = [r.id for r in dataset.records if not r.treatment]
    if spec.distance_covariates:
        z = standardize(dataset, spec.distance_covariates)
        values = cdist(z.rows(treated), z.rows(controls), metric="euclidean")
    else:
        values = np.zeros((len(treated), len(controls)))
    numeric_max = float(values.max()) if values.size else 0.0
    default_penalty = DEFAULT_PENALTY_FACTOR * numeric_max if numeric_max > 0 else 1.0

    penalties = {}
    for name, weight in spec.near_exact:
        w = default_penalty if weight is None else weight
        penalties[name] = w
        kind = dataset.schema[name].kind
        tv = dataset.column(name, treated)
        cv = dataset.column(name, controls)
        if kind == CATEGORICAL:
            mismatch = (tv[:, None] != cv[None, :]).astype(float)
        else:
            mismatch = np.abs(tv[:, None] - cv[None, :])
        values = values + w * mismatch
    if spec.caliper is not None:
        values = np.where(values > spec.caliper, np.inf, values)

    t_cat = c_cat = None
    if spec.fine_balance is not None:
        t_cat = tuple(str(v) for v in dataset.column(spec.fine_balance, treated))
        c_cat = tuple(str(v) for v in dataset.column(spec.fine_balance, controls))
    dm = DistanceMatrix(values, tuple(treated), tuple(controls), t_cat, c_cat, penalties, spec)
    dead = [treated[i] for i in np.flatnonzero(~np.isfinite(values).any(axis=1))] if controls else treated
    if dead:
        raise MatchingInfeasible("treated units with no admissible control", dead)
    return dm


def _unmatchable(allowed: np.ndarray, treated_ids: Sequence[str]) -> list[str]:
    """Treated ids left out of a maximum-cardinality matching on the allowed pairs."""
    if allowed.shape[1] == 0:
        return list(treated_ids)
    match = maximum_bipartite_matching(csr_matrix(allowed.astype(np.int8)), perm_type="column")
    return [treated_ids[i] for i in np.flatnonzero(match < 0)]


def _targets_and_categories(dm: DistanceMatrix, targets: Mapping | None) -> tuple[dict, list]:
    if dm.control_categories is None:
        raise ValueError("fine balance needs control categories on the distance matrix")
    if targets is None:
        if dm.treated_categories is None:
            raise ValueError("no fine-balance targets given and no treated categories to derive them")
        targets = Counter(dm.treated_categories)
    targets = {str(k): int(v) for k, v in targets.items()}
    if any(v < 0 for v in targets.values()):
        raise ValueError("fine-balance targets must be nonnegative")
    cats = sorted(set(targets) | set(dm.control_categories))
    return targets, cats


def _deviation(chosen_categories: Sequence[str], targets: Mapping[str, int]) -> int:
    counts = Counter(chosen_categories)
    return sum(abs(counts.get(k, 0) - targets.get(k, 0)) for k in set(counts) | set(targets))


def _as_distance(distance, control_categories=None) -> DistanceMatrix:
    if isinstance(distance, DistanceMatrix):
        return distance
    values = np.asarray(distance, dtype=float)
    if values.ndim != 2:
        raise ValueError("distance must be a 2-D matrix")
    t_ids = tuple(f"t{i}" for i in range(values.shape[0]))
    c_ids = tuple(f"c{j}" for j in range(values.shape[1]))
    cats = tuple(str(c) for c in control_categories) if control_categories is not None else None
    return DistanceMatrix(values, t_ids, c_ids, None, cats)


def solve_matching(
    distance: DistanceMatrix | np.ndarray,
    fine_balance_targets: Mapping[str, int] | None = None,
    spec: MatchSpec | None = None,
    *,
    control_categories: Sequence | None = None,
    method: str = "assignment",
) -> MatchedSample:
    """Minimum-cost perfect matching of every treated unit to a distinct control.

    With fine balance (control categories present on ``distance`` or
    given), the matched controls' category counts deviate as little as
    possible from ``fine_balance_targets`` (default: the treated
    categories), and the distance is minimized subject to that.

    ``method`` is ``"assignment"`` (scipy assignment solvers) or
    ``"flow"`` (explicit network, pure Python; small instances).

    Raises
    ------
    MatchingInfeasible
        Too few controls, or forbidden pairs leave some treated unit without
        a control.
    """
    dm = _as_distance(distance, control_categories)
    spec = spec if spec is not None else dm.spec
    n_t, n_c = dm.shape
    cost = dm.scaled()
    allowed = cost >= 0
    if n_t == 0:
        return MatchedSample((), spec, 0.0, 0, 0)
    if n_c < n_t:
        raise MatchingInfeasible(
            f"{n_t} treated but only {n_c} controls", _unmatchable(allowed, dm.treated_ids)
        )
    unmatched = _unmatchable(allowed, dm.treated_ids)
    if unmatched:
        raise MatchingInfeasible("forbidden pairs leave treated units unmatched", unmatched)

    fine = dm.control_categories is not None or fine_balance_targets is not None
    targets, cats = _targets_and_categories(dm, fine_balance_targets) if fine else ({}, [])
    if method == "flow":
        cols = _solve_flow(cost, dm.control_categories if fine else None, targets, cats)
    elif method == "assignment":
        if fine:
            cols = _solve_fine_balance_assignment(cost, dm.control_categories, targets, cats)
        else:
            cols = _solve_plain_assignment(cost)
    else:
        raise ValueError(f"unknown method {method!r}")

    units = int(sum(int(cost[i, j]) for i, j in enumerate(cols)))
    deviation = _deviation([dm.control_categories[j] for j in cols], targets) if fine else 0
    pairs = tuple((dm.treated_ids[i], dm.control_ids[j]) for i, j in enumerate(cols))
    return MatchedSample(pairs, spec, units / COST_SCALE, deviation, units)


def _solve_plain_assignment(cost: np.ndarray) -> list[int]:
    weights = np.where(cost >= 0, cost.astype(float), np.inf)
    rows, cols = linear_sum_assignment(weights)
    out = [0] * cost.shape[0]
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


def _fine_balance_graph(cost, control_categories, targets, cats, n_dummy_per_cat, shared_dummies, stage):
    """Sparse bipartite graph realizing the category-sink network.

    Rows are treated units followed by ``max(0, m_k - t_k)`` absorber rows
    per category ``k`` (``m_k`` controls, target ``t_k``). Absorbers soak up
    controls the treated leave unused; an absorber that cannot find one
    takes a dummy column instead, which is exactly one unit of overflow on
    that category. Weights are offset by one so that zero-cost edges stay
    explicit in the sparse structure.
    """
    n_t, n_c = cost.shape
    by_cat: dict[str, list[int]] = {k: [] for k in cats}
    for j, k in enumerate(control_categories):
        by_cat[k].append(j)
    absorbers = [(k, max(0, len(by_cat[k]) - targets.get(k, 0))) for k in cats]

    ti, tj = np.nonzero(cost >= 0)
    tw = (cost[ti, tj] + 1) if stage == 2 else np.ones(ti.size, dtype=np.int64)
    rows, cols, weights = [ti], [tj], [tw]
    row = n_t
    next_dummy = n_c
    shared_start = n_c
    if shared_dummies:
        next_dummy += shared_dummies
    for k, a_k in absorbers:
        if a_k == 0:
            continue
        members = np.asarray(by_cat[k], dtype=np.int64)
        block_rows = np.arange(row, row + a_k)
        rows.append(np.repeat(block_rows, members.size))
        cols.append(np.tile(members, a_k))
        weights.append(np.ones(a_k * members.size, dtype=np.int64))
        if n_dummy_per_cat:
            # stage 1: a private idle column per absorber, priced at one overflow unit
            rows.append(block_rows)
            cols.append(np.arange(next_dummy, next_dummy + a_k))
            weights.append(np.full(a_k, 2, dtype=np.int64))
            next_dummy += a_k
        if shared_dummies:
            rows.append(np.repeat(block_rows, shared_dummies))
            cols.append(np.tile(np.arange(shared_start, shared_start + shared_dummies), a_k))
            weights.append(np.ones(a_k * shared_dummies, dtype=np.int64))
        row += a_k
    graph = coo_matrix(
        (np.concatenate(weights).astype(float), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row, next_dummy),
    ).tocsr()
    return graph, row


def _solve_fine_balance_assignment(cost, control_categories, targets, cats) -> list[int]:
    n_t = cost.shape[0]
    m = Counter(control_categories)
    if (cost >= 0).all():
        min_overflow = max(0, n_t - sum(min(m.get(k, 0), targets.get(k, 0)) for k in cats))
    else:
        graph, n_rows = _fine_balance_graph(cost, control_categories, targets, cats, True, 0, stage=1)
        r, c = min_weight_full_bipartite_matching(graph)
        min_overflow = int(round(graph[r, c].sum())) - n_rows
    graph, _ = _fine_balance_graph(cost, control_categories, targets, cats, False, min_overflow, stage=2)
    try:
        r, c = min_weight_full_bipartite_matching(graph)
    except ValueError as exc:  # pragma: no cover - guarded by the feasibility checks above
        raise MatchingInfeasible(f"assignment solver failed: {exc}") from exc
    out = [0] * n_t
    for ri, ci in zip(r, c):
        if ri < n_t:
            out[ri] = int(ci)
    return out


def _solve_flow(cost, control_categories, targets, cats) -> list[int]:
    n_t, n_c = cost.shape
    source, sink = 0, 1
    t0 = 2
    c0 = t0 + n_t
    k0 = c0 + n_c
    cat_index = {k: i for i, k in enumerate(cats)}
    net = FlowNetwork(k0 + len(cats))
    finite = cost[cost >= 0]
    big = int(finite.max(initial=0)) * n_t + 1
    pair_arcs = {}
    for i in range(n_t):
        net.add_arc(source, t0 + i, 1, 0)
        for j in range(n_c):
            if cost[i, j] >= 0:
                pair_arcs[(i, j)] = net.add_arc(t0 + i, c0 + j, 1, int(cost[i, j]))
    for j in range(n_c):
        if control_categories is None:
            net.add_arc(c0 + j, sink, 1, 0)
        else:
            net.add_arc(c0 + j, k0 + cat_index[control_categories[j]], 1, 0)
    for k in cats:
        net.add_arc(k0 + cat_index[k], sink, targets.get(k, 0), 0)
        net.add_arc(k0 + cat_index[k], sink, n_c, big)
    try:
        net.min_cost_flow(source, sink, n_t)
    except InfeasibleFlow as exc:  # pragma: no cover - guarded by the feasibility checks
        raise MatchingInfeasible(str(exc)) from exc
    out = [0] * n_t
    for (i, j), arc in pair_arcs.items():
        if net.flow_on(arc):
            out[i] = j
    return out


def brute_force_matching(
    distance: DistanceMatrix | np.ndarray,
    fine_balance_targets: Mapping[str, int] | None = None,
    *,
    control_categories: Sequence | None = None,
) -> MatchedSample:
    """Exact search over every injective assignment (test oracle).

    Dynamic programming over subsets of used controls, which visits every
    injective assignment's cost implicitly. Same lexicographic objective as
    :func:`solve_matching`. Limited to 8 treated and 16 controls.
    """
    dm = _as_distance(distance, control_categories)
    n_t, n_c = dm.shape
    if n_t > BRUTE_FORCE_MAX_TREATED or n_c > BRUTE_FORCE_MAX_CONTROLS:
        raise ValueError(
            f"instance too large for brute force ({n_t}x{n_c}; limit "
            f"{BRUTE_FORCE_MAX_TREATED}x{BRUTE_FORCE_MAX_CONTROLS})"
        )
    cost = dm.scaled().tolist()
    fine = dm.control_categories is not None or fine_balance_targets is not None
    targets = _targets_and_categories(dm, fine_balance_targets)[0] if fine else {}

    # layer[mask] = (cost, previous mask, control used by the last treated unit)
    layer: dict[int, tuple[int, int, int]] = {0: (0, -1, -1)}
    history = [layer]
    for i in range(n_t):
        nxt: dict[int, tuple[int, int, int]] = {}
        for mask in sorted(layer):
            base = layer[mask][0]
            row = cost[i]
            for j in range(n_c):
                if mask >> j & 1 or row[j] < 0:
                    continue
                cand = base + row[j]
                new = mask | (1 << j)
                if new not in nxt or cand < nxt[new][0]:
                    nxt[new] = (cand, mask, j)
        layer = nxt
        history.append(layer)
    if not layer:
        raise MatchingInfeasible("no injective assignment exists", dm.treated_ids)

    def key(mask):
        dev = _deviation([dm.control_categories[j] for j in range(n_c) if mask >> j & 1], targets) if fine else 0
        return (dev, layer[mask][0], mask)

    best = min(layer, key=key)
    cols = [0] * n_t
    mask = best
    for i in range(n_t, 0, -1):
        _, prev, j = history[i][mask]
        cols[i - 1] = j
        mask = prev
    units = history[n_t][best][0]
    pairs = tuple((dm.treated_ids[i], dm.control_ids[j]) for i, j in enumerate(cols))
    deviation = key(best)[0]
    return MatchedSample(pairs, dm.spec, units / COST_SCALE, deviation, units)


def match_dataset(dataset: Dataset, spec: MatchSpec | None = None, method: str = "assignment") -> MatchedSample:
    """Build the distance for ``dataset`` and solve the matching."""
    spec = spec if spec is not None else MatchSpec.from_schema(dataset.schema)
    dm = build_distance(dataset, spec)
    return solve_matching(dm, None, spec, method=method)


@dataclass(frozen=True)
class BalanceReport:
    table: BalanceTable
    threshold: float
    flagged: tuple[str, ...]
    fine_balance_deviation: int
    category_deviation: Mapping[str, int]

    @property
    def ok(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "flagged": list(self.flagged),
            "fine_balance_deviation": self.fine_balance_deviation,
            "category_deviation": dict(self.category_deviation),
            "table": self.table.to_dict(),
        }


def verify_balance(dataset: Dataset, matched: MatchedSample, smd_threshold: float = 0.1) -> BalanceReport:
    """Flag covariates whose post-match |SMD| exceeds ``smd_threshold``."""
    table = table_one(dataset, matched)
    flagged = tuple(
        r.covariate for r in table.summary_rows() if not abs(r.smd_after) <= smd_threshold
    )
    fine = (matched.spec.fine_balance if matched.spec else None) or dataset.schema.fine_balance
    category_deviation: dict[str, int] = {}
    deviation = 0
    if fine is not None:
        t = Counter(str(v) for v in dataset.column(fine, matched.treated_ids))
        c = Counter(str(v) for v in dataset.column(fine, matched.control_ids))
        category_deviation = {k: c.get(k, 0) - t.get(k, 0) for k in sorted(set(t) | set(c))}
        deviation = sum(abs(v) for v in category_deviation.values())
    return BalanceReport(table, smd_threshold, flagged, deviation, category_deviation)
