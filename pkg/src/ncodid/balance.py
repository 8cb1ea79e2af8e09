"""Covariate standardization and balance diagnostics (SMDs, the before/after table)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .dataset import CATEGORICAL, Dataset

if TYPE_CHECKING:
    from .matcher import MatchedSample


@dataclass(frozen=True)
class Standardized:
    """Design matrix after standardization, with the parameters that produced it."""

    matrix: np.ndarray
    columns: tuple[str, ...]
    means: dict[str, float]
    sds: dict[str, float]
    constant: tuple[str, ...]
    ids: tuple[str, ...]

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        pos = {rid: i for i, rid in enumerate(self.ids)}
        return self.matrix[[pos[i] for i in ids]]


def standardize(dataset: Dataset, names: Sequence[str] | None = None) -> Standardized:
    """Center and scale numeric covariates over the whole dataset; one-hot categoricals.

    Numeric and binary columns use the population standard deviation.
    Constant columns are passed through untouched and listed in
    ``constant``. Categorical covariates expand to one indicator column per
    schema category (or per observed level when the schema lists none).
    """
    names = list(dataset.schema.names if names is None else names)
    blocks, columns = [], []
    means, sds, constant = {}, {}, []
    for name in names:
        cov = dataset.schema[name]
        values = dataset.column(name)
        if cov.kind == CATEGORICAL:
            levels = cov.categories if cov.categories is not None else sorted(set(values))
            onehot = np.array([[v == lvl for lvl in levels] for v in values], dtype=float)
            blocks.append(onehot.reshape(len(values), len(levels)))
            columns.extend(f"{name}={lvl}" for lvl in levels)
            continue
        mean = float(values.mean()) if values.size else 0.0
        sd = float(values.std()) if values.size else 0.0
        means[name], sds[name] = mean, sd
        if sd > 0:
            blocks.append(((values - mean) / sd)[:, None])
        else:
            constant.append(name)
            blocks.append(values[:, None])
        columns.append(name)
    matrix = np.hstack(blocks) if blocks else np.empty((len(dataset), 0))
    return Standardized(matrix, tuple(columns), means, sds, tuple(constant), dataset.ids)


def smd(treated_values: Sequence[float], control_values: Sequence[float]) -> float:
    """Standardized mean difference, control minus treated, over the pooled sd.

    The pooled sd is ``sqrt((var_T + var_C) / 2)`` with population variances.
    Returns 0 for a zero pooled sd with equal means and a signed infinity
    when the means differ.
    """
    t = np.asarray(treated_values, dtype=float)
    c = np.asarray(control_values, dtype=float)
    if t.size == 0 or c.size == 0:
        raise ValueError("smd needs two nonempty groups")
    diff = c.mean() - t.mean()
    pooled = math.sqrt((t.var() + c.var()) / 2)
    if pooled == 0:
        if diff == 0:
            return 0.0
        return math.copysign(math.inf, diff)
    return float(diff / pooled)


def categorical_smd(treated_labels: Sequence, control_labels: Sequence, levels: Sequence | None = None) -> float:
    """Multinomial (Mahalanobis) SMD between two categorical distributions.

    With level proportions ``p_T`` and ``p_C`` (one reference level
    dropped) and ``S = (cov_T + cov_C) / 2`` where ``cov = diag(p) - p p'``,
    returns ``sqrt((p_C - p_T)' S^-1 (p_C - p_T))``. Levels absent from both
    groups are ignored.
    """
    t = list(treated_labels)
    c = list(control_labels)
    if not t or not c:
        raise ValueError("categorical_smd needs two nonempty groups")
    if levels is None:
        levels = sorted(set(t) | set(c), key=str)
    pt = np.array([sum(1 for v in t if v == lvl) for lvl in levels], dtype=float) / len(t)
    pc = np.array([sum(1 for v in c if v == lvl) for lvl in levels], dtype=float) / len(c)
    present = (pt > 0) | (pc > 0)
    pt, pc = pt[present][1:], pc[present][1:]
    if pt.size == 0:
        return 0.0
    s = (np.diag(pt) - np.outer(pt, pt) + np.diag(pc) - np.outer(pc, pc)) / 2
    d = pc - pt
    value = float(d @ np.linalg.pinv(s) @ d)
    return math.sqrt(max(value, 0.0))


@dataclass(frozen=True)
class BalanceRow:
    """One line of the balance table.

    Numeric rows carry means/sds; categorical rows carry per-level counts
    (``level`` set) or the covariate's summary SMD (``level`` is None).
    """

    covariate: str
    level: str | None
    treated_mean: float
    treated_sd: float
    control_mean: float
    control_sd: float
    matched_mean: float
    matched_sd: float
    smd_before: float
    smd_after: float
    treated_count: int | None = None
    control_count: int | None = None
    matched_count: int | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class BalanceTable:
    rows: tuple[BalanceRow, ...]
    group_sizes: tuple[int, int, int]

    def summary_rows(self) -> tuple[BalanceRow, ...]:
        """One row per covariate (categorical levels excluded)."""
        return tuple(r for r in self.rows if r.level is None)

    def to_dict(self) -> dict:
        n_t, n_c, n_m = self.group_sizes
        return {
            "group_sizes": {"treated": n_t, "control": n_c, "matched": n_m},
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = list(BalanceRow.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _csv_cell(v) for k, v in r.to_dict().items()})
        return buf.getvalue()

    def render(self) -> str:
        """Aligned text table: mean (sd) per group for numeric rows, count (%) per level."""
        n_t, n_c, n_m = self.group_sizes
        head = ["Covariate", f"Treated (n={n_t})", f"Control (n={n_c})", f"Matched (n={n_m})",
                "SMD before", "SMD after"]
        lines = []
        for r in self.rows:
            if r.level is not None:
                cells = [
                    f"  {r.level}",
                    f"{r.treated_count} ({100 * r.treated_mean:.1f})",
                    f"{r.control_count} ({100 * r.control_mean:.1f})",
                    f"{r.matched_count} ({100 * r.matched_mean:.1f})",
                    "",
                    "",
                ]
            elif r.treated_count is not None or math.isnan(r.treated_mean):
                cells = [r.covariate, "", "", "", _fmt_smd(r.smd_before), _fmt_smd(r.smd_after)]
            else:
                cells = [
                    r.covariate,
                    f"{r.treated_mean:.1f} ({r.treated_sd:.1f})",
                    f"{r.control_mean:.1f} ({r.control_sd:.1f})",
                    f"{r.matched_mean:.1f} ({r.matched_sd:.1f})",
                    _fmt_smd(r.smd_before),
                    _fmt_smd(r.smd_after),
                ]
            lines.append(cells)
        widths = [max(len(str(row[i])) for row in [head, *lines]) for i in range(len(head))]
        fmt = lambda row: "  ".join(  # noqa: E731
            str(cell).ljust(w) if i == 0 else str(cell).rjust(w) for i, (cell, w) in enumerate(zip(row, widths))
        )
        rule = "-" * len(fmt(head))
        return "\n".join([fmt(head), rule, *(fmt(row) for row in lines)]) + "\n"


def _fmt_smd(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value != 0 and abs(value) < 0.001:
        return "<0.001" if value > 0 else ">-0.001"
    return f"{value:.3f}"


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _moments(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std())


def table_one(
    dataset: Dataset, matched: "MatchedSample", covariates: Sequence[str] | None = None
) -> BalanceTable:
    """Means/sds for the treated, all controls and matched controls, with SMDs.

    Treated are the treated members of the matched pairs; "before" compares
    them with every control in the dataset, "after" with the matched
    controls.
    """
    for t_id, c_id in matched.pairs:
        for rid in (t_id, c_id):
            if rid not in dataset:
                raise KeyError(f"matched pair references unknown record {rid!r}")
    names = list(dataset.schema.names if covariates is None else covariates)
    treated_ids = [t for t, _ in matched.pairs]
    matched_ids = [c for _, c in matched.pairs]
    control_ids = [r.id for r in dataset.records if not r.treatment]

    rows: list[BalanceRow] = []
    for name in names:
        cov = dataset.schema[name]
        t = dataset.column(name, treated_ids)
        c = dataset.column(name, control_ids)
        m = dataset.column(name, matched_ids)
        if cov.kind == CATEGORICAL:
            levels = list(cov.categories) if cov.categories is not None else sorted(
                set(t) | set(c) | set(m), key=str
            )
            rows.append(
                BalanceRow(
                    name, None, *(math.nan,) * 6,
                    smd_before=categorical_smd(t, c, levels) if len(c) else math.nan,
                    smd_after=categorical_smd(t, m, levels),
                    treated_count=len(t), control_count=len(c), matched_count=len(m),
                )
            )
            for lvl in levels:
                ti, ci, mi = (np.array([v == lvl for v in arr], dtype=float) for arr in (t, c, m))
                if not (ti.any() or ci.any() or mi.any()):
                    continue
                rows.append(
                    BalanceRow(
                        name, str(lvl),
                        *_moments(ti), *(_moments(ci) if ci.size else (math.nan, math.nan)), *_moments(mi),
                        smd_before=smd(ti, ci) if ci.size else math.nan,
                        smd_after=smd(ti, mi),
                        treated_count=int(ti.sum()), control_count=int(ci.sum()), matched_count=int(mi.sum()),
                    )
                )
            continue
        rows.append(
            BalanceRow(
                name, None,
                *_moments(t), *(_moments(c) if c.size else (math.nan, math.nan)), *_moments(m),
                smd_before=smd(t, c) if c.size else math.nan,
                smd_after=smd(t, m),
            )
        )
    return BalanceTable(tuple(rows), (len(treated_ids), len(control_ids), len(matched_ids)))
