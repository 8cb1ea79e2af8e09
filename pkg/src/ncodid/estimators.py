"""ATET point estimators on a matched sample.

Four estimators, all computed pair-wise on the matched sample:

* ``unadjusted``: treated minus matched-control outcome means.
* ``did_nco``: difference-in-differences with a binary negative control,
  ``(mean Y_T - mean N_T) - (mean Y_C - mean N_C)``.
* ``did_adjusted``: the same contrast with per-arm logistic models for Y and
  N, averaged over the treated covariate distribution.
* ``qq``: quantile-quantile equi-confounding on a count-valued control,
  mapping each treated unit's control value through the control-arm CDFs.

The public functions take a :class:`~ncodid.matcher.MatchedSample` plus
``id -> value`` mappings. Internally each estimator works on
:class:`PairArrays`, which is also what the bootstrap resamples.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .dataset import Dataset, NcoSpec
    from .matcher import MatchedSample

UNADJUSTED = "unadjusted"
DID_NCO = "did_nco"
DID_ADJUSTED = "did_adjusted"
QQ = "qq"
ESTIMATOR_TAGS = (UNADJUSTED, DID_NCO, DID_ADJUSTED, QQ)

SEPARATION_BOUND = 30.0
STEP_TOLERANCE = 1e-4


class EstimationError(ValueError):
    """An estimator cannot be evaluated on the given data."""

    def __init__(self, message: str, diagnostics: Mapping[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class EffectPoint:
    estimator: str
    atet: float
    n_pairs: int
    nco: "NcoSpec | None" = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_TAGS:
            raise ValueError(f"unknown estimator tag {self.estimator!r}")
        if not math.isfinite(self.atet):
            raise EstimationError(f"{self.estimator}: non-finite ATET {self.atet}")
        if self.n_pairs < 1:
            raise EstimationError(f"{self.estimator}: no pairs")

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "atet": self.atet,
            "n_pairs": self.n_pairs,
            "nco": self.nco.to_dict() if self.nco is not None else None,
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EffectPoint":
        from .dataset import NcoSpec

        nco = d.get("nco")
        return cls(d["estimator"], float(d["atet"]), int(d["n_pairs"]),
                   NcoSpec.from_dict(nco) if nco else None, dict(d.get("diagnostics") or {}))


# ---------------------------------------------------------------------------
# pair-aligned arrays


@dataclass(frozen=True)
class PairArrays:
    """Per-pair values; index ``i`` refers to the ``i``-th matched pair.

    Fields that an estimator does not need may be ``None``.
    """

    y_t: np.ndarray
    y_c: np.ndarray
    n_t: np.ndarray | None = None
    n_c: np.ndarray | None = None
    x_t: np.ndarray | None = None
    x_c: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.y_t)

    def take(self, idx: np.ndarray) -> "PairArrays":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return PairArrays(pick(self.y_t), pick(self.y_c), pick(self.n_t), pick(self.n_c),
                          pick(self.x_t), pick(self.x_c))


def _lookup(values: Mapping[str, Any], ids: Sequence[str], what: str) -> np.ndarray:
    try:
        return np.array([values[i] for i in ids], dtype=float)
    except KeyError as exc:
        raise EstimationError(f"missing {what} for record {exc.args[0]!r}") from None


def pair_arrays(
    matched: "MatchedSample",
    outcomes: Mapping[str, Any],
    nco: Mapping[str, Any] | None = None,
    covariates: Mapping[str, Sequence[float]] | None = None,
) -> PairArrays:
    t_ids, c_ids = matched.treated_ids, matched.control_ids
    n_t = n_c = x_t = x_c = None
    if nco is not None:
        n_t, n_c = _lookup(nco, t_ids, "NCO value"), _lookup(nco, c_ids, "NCO value")
    if covariates is not None:
        try:
            x_t = np.array([covariates[i] for i in t_ids], dtype=float).reshape(len(t_ids), -1)
            x_c = np.array([covariates[i] for i in c_ids], dtype=float).reshape(len(c_ids), -1)
        except KeyError as exc:
            raise EstimationError(f"missing covariates for record {exc.args[0]!r}") from None
    return PairArrays(_lookup(outcomes, t_ids, "outcome"), _lookup(outcomes, c_ids, "outcome"),
                      n_t, n_c, x_t, x_c)


# ---------------------------------------------------------------------------
# array-level estimators: PairArrays -> (atet, diagnostics)


def _require(arrays: PairArrays, *names: str) -> None:
    if len(arrays) == 0:
        raise EstimationError("empty matched sample")
    for name in names:
        if getattr(arrays, name) is None:
            raise EstimationError(f"estimator needs {name}")


def unadjusted_arrays(a: PairArrays) -> tuple[float, dict]:
    _require(a)
    return float(a.y_t.mean() - a.y_c.mean()), {}


def did_nco_arrays(a: PairArrays) -> tuple[float, dict]:
    _require(a, "n_t", "n_c")
    return float((a.y_t.mean() - a.n_t.mean()) - (a.y_c.mean() - a.n_c.mean())), {}


def did_adjusted_arrays(a: PairArrays) -> tuple[float, dict]:
    _require(a, "n_t", "n_c", "x_t", "x_c")
    design_t = np.column_stack([np.ones(len(a)), a.x_t])
    design_c = np.column_stack([np.ones(len(a)), a.x_c])
    fits = {}
    for arm, design, y, n in (("treated", design_t, a.y_t, a.n_t), ("control", design_c, a.y_c, a.n_c)):
        if design.shape[0] <= design.shape[1]:
            raise EstimationError(
                f"{arm} arm has {design.shape[0]} rows for {design.shape[1]} parameters"
            )
        for name, response in (("outcome", y), ("nco", n)):
            fit = fit_logistic(design, response)
            if not fit.converged:
                raise EstimationError(f"logistic fit for {arm} {name} did not converge", fit.to_dict())
            fits[f"{arm}_{name}"] = fit
    # ATET target: average predictions over the treated covariates
    mean_pred = {k: float(f.predict(design_t).mean()) for k, f in fits.items()}
    atet = (mean_pred["treated_outcome"] - mean_pred["treated_nco"]) - (
        mean_pred["control_outcome"] - mean_pred["control_nco"]
    )
    diagnostics = {f"{k}_iterations": f.iterations for k, f in fits.items()}
    diagnostics.update({f"{k}_degenerate": f.degenerate for k, f in fits.items() if f.degenerate})
    return float(atet), diagnostics


def qq_arrays(a: PairArrays) -> tuple[float, dict]:
    _require(a, "n_t", "n_c")
    control_n = EmpiricalCdf.from_sample(a.n_c)
    lo, hi = control_n.support[0], control_n.support[-1]
    clamped = np.clip(a.n_t, lo, hi)
    n_clamped = int(np.count_nonzero(clamped != a.n_t))
    u = control_n.mid(clamped)
    p_y0_control = 1.0 - float(a.y_c.mean())
    y_tilde = (u > p_y0_control).astype(float)
    atet = float(a.y_t.mean() - y_tilde.mean())
    return atet, {"n_clamped": n_clamped, "p_y0_control": p_y0_control}


ARRAY_ESTIMATORS: dict[str, Callable[[PairArrays], tuple[float, dict]]] = {
    UNADJUSTED: unadjusted_arrays,
    DID_NCO: did_nco_arrays,
    DID_ADJUSTED: did_adjusted_arrays,
    QQ: qq_arrays,
}


# ---------------------------------------------------------------------------
# public estimators


def atet_unadjusted(matched: "MatchedSample", outcomes: Mapping[str, Any]) -> EffectPoint:
    """Treated minus matched-control mean outcome."""
    arrays = pair_arrays(matched, outcomes)
    atet, diag = unadjusted_arrays(arrays)
    return EffectPoint(UNADJUSTED, atet, len(arrays), None, diag)


def atet_unmatched(dataset: "Dataset") -> EffectPoint:
    """Treated minus control mean outcome over the whole (unmatched) dataset."""
    y_t = np.array([r.outcome for r in dataset.records if r.treatment], dtype=float)
    y_c = np.array([r.outcome for r in dataset.records if not r.treatment], dtype=float)
    if y_t.size == 0 or y_c.size == 0:
        raise EstimationError("need both treated and control records")
    return EffectPoint(
        UNADJUSTED, float(y_t.mean() - y_c.mean()), int(y_t.size),
        diagnostics={"sample": "unmatched", "n_treated": int(y_t.size), "n_control": int(y_c.size)},
    )


def atet_did_nco(
    matched: "MatchedSample",
    outcomes: Mapping[str, Any],
    nco_values: Mapping[str, Any],
    nco: "NcoSpec | None" = None,
) -> EffectPoint:
    """Difference-in-differences with a binary negative control outcome."""
    arrays = pair_arrays(matched, outcomes, nco_values)
    atet, diag = did_nco_arrays(arrays)
    return EffectPoint(DID_NCO, atet, len(arrays), nco, diag)


def design_matrix(dataset: "Dataset", covariates: Sequence[str] | None = None,
                  exclude: Sequence[str] = ()) -> dict[str, np.ndarray]:
    """Per-record covariate vectors for the logistic models (categoricals one-hot, first level dropped)."""
    from .balance import standardize
    from .dataset import CATEGORICAL, STRATIFICATION_ONLY

    schema = dataset.schema
    if covariates is None:
        covariates = [c.name for c in schema.entries
                      if c.roles and STRATIFICATION_ONLY not in c.roles]
    names = [n for n in covariates if n not in set(exclude)]
    z = standardize(dataset, names)
    keep = []
    seen_first: set[str] = set()
    for j, col in enumerate(z.columns):
        base = col.split("=", 1)[0]
        if "=" in col and schema[base].kind == CATEGORICAL:
            if base not in seen_first:
                seen_first.add(base)
                continue
            if not z.matrix[:, j].any():
                continue
        if base in z.constant:
            continue
        keep.append(j)
    mat = z.matrix[:, keep]
    return {rid: mat[i] for i, rid in enumerate(z.ids)}


def atet_did_adjusted(
    matched: "MatchedSample",
    dataset: "Dataset",
    nco: "NcoSpec | None" = None,
    covariates: Sequence[str] | None = None,
    exclude: Sequence[str] = (),
) -> EffectPoint:
    """Model-based difference-in-differences.

    Logistic models for Y and N are fit within each arm of the matched
    sample; predicted probabilities are averaged over the treated units'
    covariates and combined as ``(Y_T - N_T) - (Y_C - N_C)``. Records must
    carry ``nco`` (see :func:`ncodid.dataset.build_nco`).

    Raises
    ------
    EstimationError
        Too few rows per arm, or a fit that does not converge.
    """
    design = design_matrix(dataset, covariates, exclude)
    ids = set(matched.treated_ids) | set(matched.control_ids)
    nco_values = {r.id: r.nco for r in dataset.records if r.id in ids}
    if any(v is None for v in nco_values.values()):
        raise EstimationError("records carry no NCO annotation; run build_nco first")
    arrays = pair_arrays(matched, dataset.outcomes(), nco_values, design)
    atet, diag = did_adjusted_arrays(arrays)
    return EffectPoint(DID_ADJUSTED, atet, len(arrays), nco, diag)


def atet_qq(
    matched: "MatchedSample",
    outcomes: Mapping[str, Any],
    nco_continuous: Mapping[str, Any],
    nco: "NcoSpec | None" = None,
) -> EffectPoint:
    """ATET under quantile-quantile equi-confounding with a count-valued control.

    Each treated unit's control value is ranked in the control arm (mid-rank
    for ties) and mapped to the counterfactual binary outcome
    ``1{rank > P(Y=0 | control)}``; the estimate is the treated outcome
    mean minus the mean counterfactual. Treated values outside the control
    support are clamped to its ends (count in ``diagnostics["n_clamped"]``).
    """
    arrays = pair_arrays(matched, outcomes, nco_continuous)
    atet, diag = qq_arrays(arrays)
    return EffectPoint(QQ, atet, len(arrays), nco, diag)


# ---------------------------------------------------------------------------
# empirical CDFs and the QQ transform


@dataclass(frozen=True)
class EmpiricalCdf:
    """Step CDF of a sample: ``support`` sorted unique values, ``cumprob[i] = P(X <= support[i])``."""

    support: np.ndarray
    cumprob: np.ndarray
    mass: np.ndarray

    @classmethod
    def from_sample(cls, values: Sequence[float]) -> "EmpiricalCdf":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise EstimationError("empirical CDF of an empty sample")
        support, counts = np.unique(arr, return_counts=True)
        mass = counts / arr.size
        cumprob = np.cumsum(counts) / arr.size
        cumprob[-1] = 1.0
        return cls(support, cumprob, mass)

    def __call__(self, x):
        """``P(X <= x)``."""
        idx = np.searchsorted(self.support, x, side="right")
        padded = np.concatenate([[0.0], self.cumprob])
        return padded[idx]

    def mid(self, x):
        """Mid-rank CDF ``P(X < x) + P(X = x) / 2``."""
        x = np.asarray(x, dtype=float)
        below = np.searchsorted(self.support, x, side="left")
        upto = np.searchsorted(self.support, x, side="right")
        padded = np.concatenate([[0.0], self.cumprob])
        return (padded[below] + padded[upto]) / 2

    def inverse(self, u):
        """Generalized inverse ``min{x : F(x) >= u}``; ``-inf`` for ``u <= 0``."""
        u = np.asarray(u, dtype=float)
        # tolerate cumulative rounding (k/n summed vs. k/n computed)
        idx = np.searchsorted(self.cumprob, u - 1e-12, side="left")
        idx = np.minimum(idx, self.support.size - 1)
        out = self.support[idx].astype(float)
        return np.where(u <= 0, -np.inf, out)


def qq_transform(u, control_y: EmpiricalCdf, control_n: EmpiricalCdf):
    """``F_Y(F_N^{-1}(u))`` for the control-arm CDFs; 0 at ``u <= 0`` and 1 at ``u >= 1``."""
    u_arr = np.asarray(u, dtype=float)
    inner = control_n.inverse(np.clip(u_arr, 0.0, 1.0))
    out = np.where(u_arr >= 1, 1.0, control_y(inner))
    out = np.where(u_arr <= 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def qq_curve(matched: "MatchedSample", outcomes: Mapping[str, Any], nco_continuous: Mapping[str, Any],
             grid: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """qq(u) on a grid using the matched control arm's outcome and NCO distributions."""
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    y_c = _lookup(outcomes, matched.control_ids, "outcome")
    n_c = _lookup(nco_continuous, matched.control_ids, "NCO value")
    return grid, np.asarray(qq_transform(grid, EmpiricalCdf.from_sample(y_c), EmpiricalCdf.from_sample(n_c)))


# ---------------------------------------------------------------------------
# logistic regression by IRLS


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    score_norm: float = 0.0
    separated: bool = False
    degenerate: bool = False
    ridge_used: bool = False

    def predict(self, design: np.ndarray) -> np.ndarray:
        """Fitted probabilities for rows of ``design`` (intercept column included)."""
        if self.degenerate:
            # all-same response: the MLE sits at the boundary
            return np.full(design.shape[0], 1.0 if self.coefficients[0] > 0 else 0.0)
        return _sigmoid(design @ self.coefficients)

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "score_norm": self.score_norm,
            "separated": self.separated,
            "degenerate": self.degenerate,
            "ridge_used": self.ridge_used,
        }


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def logistic_loglik(beta: np.ndarray, design: np.ndarray, response: np.ndarray) -> float:
    eta = design @ beta
    # log(1 + e^eta) computed stably
    return float(np.sum(response * eta - np.logaddexp(0.0, eta)))


def logistic_score(beta: np.ndarray, design: np.ndarray, response: np.ndarray) -> np.ndarray:
    """Gradient of :func:`logistic_loglik` in ``beta``."""
    return design.T @ (response - _sigmoid(design @ beta))


def fit_logistic(
    design: np.ndarray,
    response: Sequence[float],
    tol: float = 1e-8,
    max_iter: int = 100,
    ridge: float = 1e-6,
) -> LogisticFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    ``design`` must include the intercept column first. Stops when the
    largest absolute score component is at most ``tol`` and the last Newton
    step moved no coefficient by more than ``1e-4`` (under separation the
    score vanishes while the coefficients keep growing). A singular
    weighted Gram matrix gets ``ridge * I`` added. Any coefficient beyond
    +/-30 is taken as separation and the fit is marked not converged. An
    all-0 or all-1 response yields a flagged degenerate fit that predicts
    that constant.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("design rows must match the response length")
    n, p = X.shape
    if np.all(y == y[0]):
        coef = np.zeros(p)
        coef[0] = SEPARATION_BOUND if y[0] == 1 else -SEPARATION_BOUND
        return LogisticFit(coef, True, 0, 0.0, 0.0, False, True, False)

    beta = np.zeros(p)
    ridge_used = False
    separated = False
    score = logistic_score(beta, X, y)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mu = _sigmoid(X @ beta)
        w = mu * (1.0 - mu)
        gram = X.T @ (X * w[:, None])
        try:
            if np.linalg.cond(gram) > 1e12:
                raise np.linalg.LinAlgError("ill-conditioned")
            step = np.linalg.solve(gram, score)
        except np.linalg.LinAlgError:
            ridge_used = True
            step = np.linalg.solve(gram + ridge * np.eye(p), score)
        beta = beta + step
        score = logistic_score(beta, X, y)
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            separated = True
            break
        # on a separation path the score vanishes while steps stay large
        small_step = np.max(np.abs(step)) <= STEP_TOLERANCE
        if np.max(np.abs(score)) <= tol and small_step:
            break
    score_norm = float(np.max(np.abs(score)))
    converged = (not separated) and score_norm <= tol and small_step
    if not converged and not separated:
        warnings.warn(f"IRLS stopped after {iterations} iterations (max |score| {score_norm:.3g})",
                      RuntimeWarning, stacklevel=2)
    return LogisticFit(beta, converged, iterations, logistic_loglik(beta, X, y), score_norm,
                       separated, False, ridge_used)
