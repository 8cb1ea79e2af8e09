"""Synthetic data with known ATET, following the confounded NCO causal graph.

Observed confounders ``C`` (standard normal, ``covariate_dims`` columns) and
a latent ``U`` (standard normal) drive treatment, outcome and the negative
control::

    A   ~ Bernoulli(clip(logistic(a0 + C.beta + gamma U), 0.02, 0.98))
    Y_a ~ Bernoulli(logistic(y0 + C.theta + eta U + delta a))
    N      never depends on A

The NCO model depends on ``equi_confounding_mode``:

``additive``
    ``N ~ Bernoulli(logistic(n0 + C.theta_N + eta U))``: the latent enters
    N exactly as it enters Y. With the default ``n0 = y0`` and
    ``theta_N = theta``, N given (C, U) has the law of ``Y_0``.
``violated``
    As ``additive`` but with a different latent coefficient on N.
``qq``
    N is a Poisson count driven by its own latent
    ``W = eta U + logistic noise`` (Y's latent index is
    ``eta U + logistic noise`` with independent noise). Both latents share
    ``U`` in the same way, so their quantile associations with A agree.

Binary controls are written to the dataset as ``cc_n = N`` for every
window; Poisson controls as nested counts ``cc_1 <= cc_2 <= cc_3``. All
parameter defaults are artifact choices, not fitted to any real data.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import poisson

from .dataset import (
    CATEGORICAL,
    MATCH_DISTANCE,
    NEAR_EXACT,
    NUMERIC,
    Covariate,
    CovariateSchema,
    Dataset,
    SubmissionRecord,
)

ADDITIVE = "additive"
QQ_MODE = "qq"
VIOLATED = "violated"
MODES = (ADDITIVE, QQ_MODE, VIOLATED)

PROPENSITY_CLIP = (0.02, 0.98)
POPULATION_DRAWS = 1_000_000


class DgpError(ValueError):
    pass


def _vector(value, dims: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(dims, float(arr[0]))
    if arr.size != dims:
        raise DgpError(f"{name} has {arr.size} entries for {dims} covariates")
    return arr


@dataclass(frozen=True)
class DgpConfig:
    n_units: int = 2000
    covariate_dims: int = 4
    coef_C_to_A: Any = 0.5
    coef_U_to_A: float = 1.5
    coef_C_to_Y: Any = 0.3
    coef_U_to_Y: float = 1.5
    coef_C_to_N: Any = None
    coef_U_to_N: float | None = None
    treatment_effect: float = 0.8
    equi_confounding_mode: str = ADDITIVE
    seed: int = 0
    # about 16% treated at the default coefficients, close to the conference sample's share
    intercept_A: float = -2.5
    intercept_Y: float = -1.0
    intercept_N: float | None = None
    nco_kind: str | None = None
    poisson_rate: float = 20.0
    years: tuple[int, ...] = (2018, 2019, 2020)

    def __post_init__(self):
        if self.n_units <= 0:
            raise DgpError(f"n_units must be positive, got {self.n_units}")
        if self.covariate_dims < 0:
            raise DgpError("covariate_dims must be >= 0")
        if self.equi_confounding_mode not in MODES:
            raise DgpError(f"unknown equi_confounding_mode {self.equi_confounding_mode!r}")
        if self.nco_kind not in (None, "binary", "poisson"):
            raise DgpError(f"unknown nco_kind {self.nco_kind!r}")
        if self.equi_confounding_mode == ADDITIVE and self.coef_U_to_N is not None \
                and self.coef_U_to_N != self.coef_U_to_Y:
            raise DgpError("additive mode requires coef_U_to_N == coef_U_to_Y")
        if self.equi_confounding_mode == QQ_MODE and self.resolved_nco_kind != "poisson":
            raise DgpError("qq mode uses a Poisson negative control")
        if self.equi_confounding_mode == VIOLATED and self.resolved_coef_U_to_N == self.coef_U_to_Y:
            raise DgpError("violated mode needs coef_U_to_N different from coef_U_to_Y")
        if not self.years:
            raise DgpError("years must be nonempty")
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))

    @property
    def resolved_nco_kind(self) -> str:
        if self.nco_kind is not None:
            return self.nco_kind
        return "poisson" if self.equi_confounding_mode == QQ_MODE else "binary"

    @property
    def resolved_coef_U_to_N(self) -> float:
        if self.coef_U_to_N is not None:
            return float(self.coef_U_to_N)
        if self.equi_confounding_mode == VIOLATED:
            return self.coef_U_to_Y / 3
        return float(self.coef_U_to_Y)

    def vectors(self) -> dict[str, np.ndarray]:
        d = self.covariate_dims
        theta = _vector(self.coef_C_to_Y, d, "coef_C_to_Y")
        return {
            "beta": _vector(self.coef_C_to_A, d, "coef_C_to_A"),
            "theta": theta,
            "theta_n": theta if self.coef_C_to_N is None else _vector(self.coef_C_to_N, d, "coef_C_to_N"),
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DgpConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DgpError(f"unknown DGP config keys: {sorted(unknown)}")
        kw = dict(d)
        if "years" in kw:
            kw["years"] = tuple(kw["years"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path: str | Path) -> "DgpConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
            data = data.get("dgp", data)
        else:
            data = json.loads(text)
        return cls.from_dict(data)


@dataclass(frozen=True)
class SyntheticUnit:
    """Generated unit with its latents and both potential outcomes (oracle use only)."""

    record: SubmissionRecord
    u: float
    w: float | None
    y0: bool
    y1: bool
    propensity: float
    p0: float
    p1: float


def synthetic_schema(config: DgpConfig) -> CovariateSchema:
    md = frozenset({MATCH_DISTANCE})
    entries = [Covariate(f"x{k + 1}", NUMERIC, md) for k in range(config.covariate_dims)]
    entries.append(
        Covariate("year", CATEGORICAL, frozenset({NEAR_EXACT}), categories=tuple(str(y) for y in config.years))
    )
    return CovariateSchema(tuple(entries))


def _latents(config: DgpConfig, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    """Draw everything that does not depend on realized treatment."""
    v = config.vectors()
    C = rng.standard_normal((n, config.covariate_dims))
    U = rng.standard_normal(n)
    e = np.clip(expit(config.intercept_A + C @ v["beta"] + config.coef_U_to_A * U), *PROPENSITY_CLIP)
    index_y = config.intercept_Y + C @ v["theta"] + config.coef_U_to_Y * U
    return {"C": C, "U": U, "e": e, "index_y": index_y}


def _nco_index(config: DgpConfig, C: np.ndarray, U: np.ndarray) -> np.ndarray:
    v = config.vectors()
    n0 = config.intercept_Y if config.intercept_N is None else config.intercept_N
    return n0 + C @ v["theta_n"] + config.resolved_coef_U_to_N * U


def generate(config: DgpConfig, treatment: Sequence[bool] | None = None) -> tuple[Dataset, list[SyntheticUnit]]:
    """Draw one synthetic study; deterministic in ``config`` (including its seed).

    ``treatment`` overrides the drawn assignment without changing any other
    random draw, which lets callers check that N does not respond to A.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_units
    lat = _latents(config, rng, n)
    C, U = lat["C"], lat["U"]
    A = rng.random(n) < lat["e"]
    if treatment is not None:
        A = np.asarray(treatment, dtype=bool)
        if A.shape != (n,):
            raise DgpError(f"treatment override needs {n} entries, got {A.shape}")
    p0 = expit(lat["index_y"])
    p1 = expit(lat["index_y"] + config.treatment_effect)
    # one uniform per unit couples the potential outcomes monotonically
    v_y = rng.random(n)
    y0 = v_y < p0
    y1 = v_y < p1
    y_obs = np.where(A, y1, y0)

    index_n = _nco_index(config, C, U)
    w = None
    if config.resolved_nco_kind == "binary":
        N = rng.random(n) < expit(index_n)
        counts = {k: N.astype(int) for k in (1, 2, 3)}
    else:
        w = config.resolved_coef_U_to_N * U + rng.logistic(size=n)
        latent = index_n - config.resolved_coef_U_to_N * U + w
        rank = expit(latent)
        counts = {k: poisson.ppf(rank, config.poisson_rate * k).astype(int) for k in (1, 2, 3)}

    years = rng.choice(np.asarray(config.years), size=n)
    months = rng.integers(1, 13, size=n)
    days = rng.integers(1, 29, size=n)
    width = len(str(n))
    names = [f"x{k + 1}" for k in range(config.covariate_dims)]
    units = []
    records = []
    for i in range(n):
        covs = {name: float(C[i, k]) for k, name in enumerate(names)}
        covs["year"] = str(int(years[i]))
        rec = SubmissionRecord(
            id=f"s{i:0{width}d}",
            treatment=bool(A[i]),
            outcome=bool(y_obs[i]),
            covariates=covs,
            publication_date=dt.date(int(years[i]), int(months[i]), int(days[i])),
            citation_counts={k: int(counts[k][i]) for k in (1, 2, 3)},
        )
        records.append(rec)
        units.append(
            SyntheticUnit(rec, float(U[i]), None if w is None else float(w[i]), bool(y0[i]), bool(y1[i]),
                          float(lat["e"][i]), float(p0[i]), float(p1[i]))
        )
    return Dataset(synthetic_schema(config), tuple(records)), units


def true_atet(units: Sequence[SyntheticUnit]) -> float:
    """Finite-sample ATET: mean of ``y1 - y0`` over the treated units."""
    diffs = [int(u.y1) - int(u.y0) for u in units if u.record.treatment]
    if not diffs:
        raise DgpError("no treated units")
    return float(np.mean(diffs))


def population_atet(config: DgpConfig, n_draws: int = POPULATION_DRAWS, seed: int = 20240101) -> float:
    """Population ATET by Monte Carlo over ``n_draws`` fresh units.

    Uses the propensity-weighted mean of ``P(Y_1=1) - P(Y_0=1)``, which has
    the same expectation as averaging over sampled treated units.
    """
    rng = np.random.default_rng(seed)
    lat = _latents(config, rng, n_draws)
    gain = expit(lat["index_y"] + config.treatment_effect) - expit(lat["index_y"])
    return float(np.sum(lat["e"] * gain) / np.sum(lat["e"]))


def calibrate_effect(config: DgpConfig, target_atet: float, n_draws: int = POPULATION_DRAWS,
                     seed: int = 20240101) -> DgpConfig:
    """Config whose ``treatment_effect`` puts the population ATET at ``target_atet``."""
    f = lambda delta: population_atet(replace(config, treatment_effect=delta), n_draws, seed) - target_atet  # noqa: E731
    delta = brentq(f, -10.0, 10.0, xtol=1e-10)
    return replace(config, treatment_effect=float(delta))


def equi_confounding_gap(config: DgpConfig, n_draws: int = 100_000, seed: int = 7) -> float:
    """``E[Y_0 - N | A=1] - E[Y_0 - N | A=0]`` in a large sample (zero under additive equi-confounding)."""
    rng = np.random.default_rng(seed)
    lat = _latents(config, rng, n_draws)
    A = rng.random(n_draws) < lat["e"]
    if config.resolved_nco_kind != "binary":
        raise DgpError("the additive gap is defined for a binary NCO")
    diff = expit(lat["index_y"]) - expit(_nco_index(config, lat["C"], lat["U"]))
    return float(diff[A].mean() - diff[~A].mean())
