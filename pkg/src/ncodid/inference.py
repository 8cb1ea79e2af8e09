"""Pair-bootstrap confidence intervals and stratified subgroup estimates."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import Dataset, NcoSpec
from .estimators import (
    ARRAY_ESTIMATORS,
    DID_ADJUSTED,
    DID_NCO,
    ESTIMATOR_TAGS,
    QQ,
    UNADJUSTED,
    EffectPoint,
    EstimationError,
    PairArrays,
    design_matrix,
    pair_arrays,
)
from .matcher import MatchedSample

DEFAULT_REPLICATES = 2000
MAX_FAILURE_RATE = 0.01


class BootstrapError(RuntimeError):
    def __init__(self, message: str, failures: Mapping[str, int]):
        super().__init__(f"{message}: {dict(failures)}")
        self.failures = dict(failures)


@dataclass(frozen=True)
class EstimationData:
    """Per-record values the estimators read, keyed by record id.

    ``nco`` is the binary control (DiD estimators), ``nco_counts`` the raw
    counts (QQ estimator), ``covariates`` the design vectors of the
    adjusted estimator.
    """

    outcomes: Mapping[str, Any]
    nco: Mapping[str, Any] | None = None
    nco_counts: Mapping[str, Any] | None = None
    covariates: Mapping[str, np.ndarray] | None = None
    nco_spec: NcoSpec | None = None

    @classmethod
    def from_dataset(
        cls,
        dataset: Dataset,
        nco_spec: NcoSpec | None = None,
        count_window: int | None = None,
        design_covariates: Sequence[str] | None = None,
        exclude: Sequence[str] = (),
        with_design: bool = False,
    ) -> "EstimationData":
        nco = dataset.nco_values() or None
        window = count_window if count_window is not None else (nco_spec.window_years if nco_spec else None)
        counts = None
        if window is not None:
            counts = {r.id: r.citation_counts[window] for r in dataset.records if window in r.citation_counts}
        covs = design_matrix(dataset, design_covariates, exclude) if with_design else None
        return cls(dataset.outcomes(), nco, counts, covs, nco_spec)

    def arrays(self, matched: MatchedSample, estimator: str) -> PairArrays:
        if estimator == UNADJUSTED:
            return pair_arrays(matched, self.outcomes)
        if estimator == DID_NCO:
            if self.nco is None:
                raise EstimationError("did_nco needs binary NCO values")
            return pair_arrays(matched, self.outcomes, self.nco)
        if estimator == DID_ADJUSTED:
            if self.nco is None or self.covariates is None:
                raise EstimationError("did_adjusted needs binary NCO values and covariates")
            return pair_arrays(matched, self.outcomes, self.nco, self.covariates)
        if estimator == QQ:
            if self.nco_counts is None:
                raise EstimationError("qq needs NCO counts")
            return pair_arrays(matched, self.outcomes, self.nco_counts)
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATOR_TAGS}")


@dataclass(frozen=True)
class EffectEstimate:
    point: EffectPoint
    ci_low: float
    ci_high: float
    level: float
    replicates: int
    seed: int
    n_failed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise ValueError("ci_low must not exceed ci_high")

    @property
    def point_outside_ci(self) -> bool:
        return not self.ci_low <= self.point.atet <= self.ci_high

    @property
    def significant(self) -> bool:
        return self.ci_low > 0 or self.ci_high < 0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "point": self.point.to_dict(),
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "replicates": self.replicates,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "point_outside_ci": self.point_outside_ci,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EffectEstimate":
        return cls(EffectPoint.from_dict(d["point"]), float(d["ci_low"]), float(d["ci_high"]),
                   float(d["level"]), int(d["replicates"]), int(d["seed"]), int(d.get("n_failed", 0)),
                   d.get("label", ""))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Generator for bootstrap replicate ``replicate``, seeded with ``seed XOR replicate``."""
    return np.random.default_rng(int(seed) ^ int(replicate))


def replicate_indices(seed: int, replicate: int, n_pairs: int) -> np.ndarray:
    return replicate_rng(seed, replicate).integers(0, n_pairs, size=n_pairs)


def _point(estimator: str, arrays: PairArrays, nco: NcoSpec | None) -> EffectPoint:
    atet, diag = ARRAY_ESTIMATORS[estimator](arrays)
    return EffectPoint(estimator, atet, len(arrays), nco if estimator != UNADJUSTED else None, diag)


def bootstrap_arrays(
    arrays: PairArrays,
    estimator: str,
    replicates: int = DEFAULT_REPLICATES,
    level: float = 0.95,
    seed: int = 0,
    nco: NcoSpec | None = None,
    workers: int = 1,
    label: str = "",
) -> EffectEstimate:
    """Percentile pair-bootstrap around ``estimator`` on pair-aligned arrays."""
    if replicates < 100:
        raise ValueError(f"need at least 100 bootstrap replicates, got {replicates}")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if estimator not in ARRAY_ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATOR_TAGS}")
    point = _point(estimator, arrays, nco)
    fn = ARRAY_ESTIMATORS[estimator]
    n = len(arrays)

    def one(b: int):
        try:
            return fn(arrays.take(replicate_indices(seed, b, n)))[0], None
        except (EstimationError, np.linalg.LinAlgError, FloatingPointError) as exc:
            return math.nan, type(exc).__name__ + ": " + str(exc).split(";")[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(replicates)))
    else:
        results = [one(b) for b in range(replicates)]
    failures = Counter(msg for _, msg in results if msg is not None)
    n_failed = sum(failures.values())
    if n_failed > MAX_FAILURE_RATE * replicates:
        raise BootstrapError(f"{n_failed} of {replicates} bootstrap replicates failed", failures)
    values = np.array([v for v, msg in results if msg is None])
    alpha = 1.0 - level
    lo, hi = np.quantile(values, [alpha / 2, 1 - alpha / 2])
    return EffectEstimate(point, float(lo), float(hi), float(level), int(replicates), int(seed),
                          n_failed, label)


def bootstrap_ci(
    matched: MatchedSample,
    data: EstimationData,
    estimator: str,
    replicates: int = DEFAULT_REPLICATES,
    level: float = 0.95,
    seed: int = 0,
    workers: int = 1,
    label: str = "",
) -> EffectEstimate:
    """Point estimate and percentile CI from resampling matched pairs with replacement.

    Replicate ``b`` draws its pairs with a generator seeded from
    ``seed ^ b`` alone, so results do not depend on ``workers``.
    Replicates where the estimator fails are dropped and counted; more than
    1% failures raise :class:`BootstrapError`.
    """
    arrays = data.arrays(matched, estimator)
    return bootstrap_arrays(arrays, estimator, replicates, level, seed, data.nco_spec, workers, label)


# ---------------------------------------------------------------------------
# stratification

INSTITUTION = "institution"
CITATIONS = "citations"


@dataclass(frozen=True)
class StratumSpec:
    """Bins on one covariate, assigned by the treated member of each pair.

    ``closed="right"`` makes bin ``i`` the interval ``(edges[i-1], edges[i]]``;
    ``closed="left"`` makes it ``[edges[i-1], edges[i])``. The outer bins
    are unbounded.
    """

    variable: str
    bin_edges: tuple[float, ...]
    bin_labels: tuple[str, ...]
    dropped_covariates: tuple[str, ...] = ()
    closed: str = "right"

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", tuple(float(e) for e in self.bin_edges))
        object.__setattr__(self, "bin_labels", tuple(self.bin_labels))
        object.__setattr__(self, "dropped_covariates", tuple(self.dropped_covariates))
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValueError(f"bin edges must be strictly increasing, got {list(self.bin_edges)}")
        if len(self.bin_labels) != len(self.bin_edges) + 1:
            raise ValueError(f"{len(self.bin_edges)} edges need {len(self.bin_edges) + 1} labels")
        if self.closed not in ("left", "right"):
            raise ValueError("closed must be 'left' or 'right'")
        if self.variable not in self.dropped_covariates:
            object.__setattr__(self, "dropped_covariates", (self.variable, *self.dropped_covariates))

    def assign(self, values: Sequence[float]) -> np.ndarray:
        """Bin index for each value."""
        return np.searchsorted(np.asarray(self.bin_edges), np.asarray(values, dtype=float),
                               side="left" if self.closed == "right" else "right")

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "bin_edges": list(self.bin_edges),
            "bin_labels": list(self.bin_labels),
            "dropped_covariates": list(self.dropped_covariates),
            "closed": self.closed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StratumSpec":
        return cls(d["variable"], tuple(d["bin_edges"]), tuple(d["bin_labels"]),
                   tuple(d.get("dropped_covariates", ())), d.get("closed", "right"))


def institution_strata() -> StratumSpec:
    """Minimum author-institution rank: top-10, 11-100, others (covariate in log10 units)."""
    return StratumSpec(
        "log_ins_rank_min", (1.0, 2.0), ("Top-10", "Top-11 to 100", "Others"),
        ("log_ins_rank_min", "log_ins_rank_avg", "log_ins_rank_max"), closed="right",
    )


def citation_strata() -> StratumSpec:
    """Maximum author citations: <500, 500-2000, >2000 (covariate in log10 units)."""
    return StratumSpec(
        "log_author_cite_max", (math.log10(500), math.log10(2000)), ("<500", "500-2000", ">2000"),
        ("log_author_cite_min", "log_author_cite_avg", "log_author_cite_max"), closed="left",
    )


@dataclass(frozen=True)
class StratumResult:
    label: str
    estimate: EffectEstimate | None
    n_treated: int
    n_control: int
    n_nco_treated: int | None = None
    n_nco_control: int | None = None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "estimate": self.estimate.to_dict() if self.estimate else None,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "n_nco_treated": self.n_nco_treated,
            "n_nco_control": self.n_nco_control,
        }


ALL_STRATA = "All"


def stratified_estimates(
    matched: MatchedSample,
    dataset: Dataset,
    spec: StratumSpec,
    estimator: str,
    replicates: int = DEFAULT_REPLICATES,
    level: float = 0.95,
    seed: int = 0,
    nco_spec: NcoSpec | None = None,
    count_window: int | None = None,
) -> list[StratumResult]:
    """Per-stratum estimates plus an all-strata row (first).

    Each pair goes to the stratum of its treated member. The adjusted
    estimator leaves out ``spec.dropped_covariates``. Strata without pairs
    are reported with ``estimate=None``.
    """
    if spec.variable not in dataset.schema:
        raise KeyError(f"stratification variable {spec.variable!r} not in schema")
    data = EstimationData.from_dataset(
        dataset, nco_spec, count_window, exclude=spec.dropped_covariates, with_design=estimator == DID_ADJUSTED
    )
    values = dataset.column(spec.variable, matched.treated_ids)
    bins = spec.assign(values)
    nco = data.nco

    def summarize(label: str, sub: MatchedSample) -> StratumResult:
        n_nco_t = n_nco_c = None
        if nco is not None:
            n_nco_t = int(sum(bool(nco[t]) for t in sub.treated_ids))
            n_nco_c = int(sum(bool(nco[c]) for c in sub.control_ids))
        est = None
        if len(sub):
            est = bootstrap_ci(sub, data, estimator, replicates, level, seed, label=label)
        return StratumResult(label, est, len(sub), len(sub), n_nco_t, n_nco_c)

    results = [summarize(ALL_STRATA, matched)]
    for k, label in enumerate(spec.bin_labels):
        pairs = tuple(p for p, b in zip(matched.pairs, bins) if b == k)
        sub = MatchedSample(pairs, matched.spec, math.nan, 0)
        results.append(summarize(label, sub))
    return results


def overlap_report(estimates: Sequence[EffectEstimate]) -> np.ndarray:
    """``out[i, j]`` is True when the CIs of estimates ``i`` and ``j`` intersect."""
    if len(estimates) < 2:
        raise ValueError("overlap needs at least two estimates")
    lo = np.array([e.ci_low for e in estimates])
    hi = np.array([e.ci_high for e in estimates])
    return np.maximum(lo[:, None], lo[None, :]) <= np.minimum(hi[:, None], hi[None, :])


ESTIMATE_CSV_FIELDS = (
    "panel", "label", "estimator", "atet", "ci_low", "ci_high", "level", "n_pairs",
    "window_years", "quantile", "threshold", "replicates", "seed", "n_failed",
)


def estimates_to_csv(rows: Sequence[tuple[str, EffectEstimate]]) -> str:
    """Long-format CSV: one line per (panel, estimate)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ESTIMATE_CSV_FIELDS)
    for panel, est in rows:
        nco = est.point.nco
        w.writerow([
            panel, est.label, est.point.estimator, repr(est.point.atet), repr(est.ci_low), repr(est.ci_high),
            est.level, est.point.n_pairs,
            nco.window_years if nco else "", nco.quantile if nco else "", nco.threshold if nco else "",
            est.replicates, est.seed, est.n_failed,
        ])
    return buf.getvalue()
