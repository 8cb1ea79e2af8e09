"""Study dataset: covariate schema, CSV ingestion, citation windows and NCO construction.

A dataset is a list of immutable :class:`SubmissionRecord` objects plus the
:class:`CovariateSchema` describing their covariates. Records carry
fixed-window citation counts ``citation_counts[n]`` (citations received in the
``n`` years after first public availability), from which the binary negative
control outcome is built by :func:`build_nco`.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
BINARY = "binary"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, BINARY, CATEGORICAL)

MATCH_DISTANCE = "match-distance"
NEAR_EXACT = "near-exact"
FINE_BALANCE = "fine-balance"
STRATIFICATION_ONLY = "stratification-only"
ROLES = (MATCH_DISTANCE, NEAR_EXACT, FINE_BALANCE, STRATIFICATION_ONLY)

RESERVED_COLUMNS = ("id", "treatment", "outcome", "publication_date", "citing_dates")
DEFAULT_WINDOWS = (1, 2, 3)
DEFAULT_EVALUATION_YEAR = 2023

_CC_COLUMN = re.compile(r"^cc_(\d+)$")


class SchemaError(ValueError):
    """Raised when a covariate schema is internally inconsistent."""


class DatasetError(ValueError):
    """A structural problem in an input file, located by row and column.

    ``row`` is the 1-based data row (the header is row 0); ``None`` for
    header-level problems.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.detail = message

    def to_dict(self) -> dict:
        return {"error": "DatasetError", "row": self.row, "column": self.column, "message": self.detail}


class NcoError(ValueError):
    """Raised when a negative control outcome cannot be constructed."""


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str
    roles: frozenset[str] = frozenset()
    categories: tuple[str, ...] | None = None
    integer: bool = False
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "roles", frozenset(self.roles))
        unknown = set(self.roles) - set(ROLES)
        if unknown:
            raise SchemaError(f"covariate {self.name!r}: unknown roles {sorted(unknown)}")
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if NEAR_EXACT in self.roles and not (
            self.kind in (BINARY, CATEGORICAL) or (self.kind == NUMERIC and self.integer)
        ):
            raise SchemaError(
                f"covariate {self.name!r}: near-exact requires a binary, categorical "
                "or integer-valued numeric covariate"
            )
        if FINE_BALANCE in self.roles and self.kind not in (BINARY, CATEGORICAL):
            raise SchemaError(f"covariate {self.name!r}: fine balance needs a discrete covariate")
        if MATCH_DISTANCE in self.roles and self.kind == CATEGORICAL:
            raise SchemaError(
                f"covariate {self.name!r}: categorical covariates cannot enter the L2 distance"
            )

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind, "roles": sorted(self.roles)}
        if self.categories is not None:
            d["categories"] = list(self.categories)
        if self.integer:
            d["integer"] = True
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Covariate":
        bounds = d.get("bounds")
        cats = d.get("categories")
        return cls(
            name=d["name"],
            kind=d["kind"],
            roles=frozenset(d.get("roles", ())),
            categories=tuple(cats) if cats is not None else None,
            integer=bool(d.get("integer", False)),
            bounds=(float(bounds[0]), float(bounds[1])) if bounds is not None else None,
        )


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate definitions with their matching roles."""

    entries: tuple[Covariate, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [c.name for c in self.entries]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate covariate names: {dupes}")
        clash = sorted(set(names) & set(RESERVED_COLUMNS))
        if clash or any(_CC_COLUMN.match(n) for n in names):
            raise SchemaError(f"covariate names collide with reserved columns: {clash or names}")
        fine = [c.name for c in self.entries if FINE_BALANCE in c.roles]
        if len(fine) > 1:
            raise SchemaError(f"at most one fine-balance covariate allowed, got {fine}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.entries)

    def __getitem__(self, name: str) -> Covariate:
        for c in self.entries:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: object) -> bool:
        return any(c.name == name for c in self.entries)

    def with_role(self, role: str) -> tuple[str, ...]:
        return tuple(c.name for c in self.entries if role in c.roles)

    @property
    def fine_balance(self) -> str | None:
        fine = self.with_role(FINE_BALANCE)
        return fine[0] if fine else None

    def without(self, names: Iterable[str]) -> "CovariateSchema":
        drop = set(names)
        return CovariateSchema(tuple(c for c in self.entries if c.name not in drop))

    def to_dict(self) -> dict:
        return {"covariates": [c.to_dict() for c in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CovariateSchema":
        return cls(tuple(Covariate.from_dict(e) for e in d["covariates"]))

    @classmethod
    def from_json(cls, path: str | Path) -> "CovariateSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def paper_schema() -> CovariateSchema:
    """The 18 ICLR covariates: year/n_author near-exact, topic_cluster fine-balanced."""
    md = frozenset({MATCH_DISTANCE})
    numeric = lambda name, **kw: Covariate(name, NUMERIC, md, **kw)  # noqa: E731
    binary = lambda name: Covariate(name, BINARY, md)  # noqa: E731
    return CovariateSchema(
        (
            Covariate(
                "year",
                CATEGORICAL,
                frozenset({NEAR_EXACT}),
                categories=("2017", "2018", "2019", "2020", "2021", "2022"),
            ),
            numeric("n_fig", bounds=(0, math.inf)),
            numeric("n_ref", bounds=(0, math.inf)),
            numeric("n_sec", bounds=(0, math.inf)),
            numeric("log_text_length"),
            numeric("text_ppl", bounds=(0, 1)),
            Covariate(
                "topic_cluster",
                CATEGORICAL,
                frozenset({FINE_BALANCE}),
                categories=tuple(f"{k:02d}" for k in range(20)),
            ),
            Covariate("n_author", NUMERIC, frozenset({NEAR_EXACT}), integer=True, bounds=(1, math.inf)),
            numeric("n_author_female", integer=True, bounds=(0, math.inf)),
            binary("first_author_female"),
            binary("any_author_female"),
            binary("no_US_author"),
            numeric("log_ins_rank_min"),
            numeric("log_ins_rank_avg"),
            numeric("log_ins_rank_max"),
            numeric("log_author_cite_min"),
            numeric("log_author_cite_avg"),
            numeric("log_author_cite_max"),
        )
    )


@dataclass(frozen=True)
class SubmissionRecord:
    id: str
    treatment: bool
    outcome: bool
    covariates: Mapping[str, Any]
    publication_date: dt.date | None
    citing_dates: tuple[dt.date, ...] = ()
    citation_counts: Mapping[int, int] = field(default_factory=dict)
    has_citation_record: bool = True
    nco: bool | None = None

    @property
    def year(self) -> int:
        return int(float(self.covariates["year"]))


@dataclass(frozen=True)
class LoadReport:
    n_rows: int
    n_loaded: int
    dropped_missing_date: tuple[str, ...] = ()
    zero_citation_ids: tuple[str, ...] = ()
    count_source: str = "citing_dates"

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_loaded": self.n_loaded,
            "n_dropped_missing_date": len(self.dropped_missing_date),
            "dropped_missing_date": list(self.dropped_missing_date),
            "n_zero_citation": len(self.zero_citation_ids),
            "count_source": self.count_source,
        }


@dataclass(frozen=True)
class Dataset:
    schema: CovariateSchema
    records: tuple[SubmissionRecord, ...]
    load_report: LoadReport | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for r in self.records:
            if r.id in seen:
                raise DatasetError(f"duplicate record id {r.id!r}", column="id")
            seen.add(r.id)
        object.__setattr__(self, "_index", {r.id: i for i, r in enumerate(self.records)})

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, record_id: str) -> SubmissionRecord:
        return self.records[self._index[record_id]]

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._index

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @property
    def year_range(self) -> tuple[int, int] | None:
        if "year" not in self.schema or not self.records:
            return None
        years = [r.year for r in self.records]
        return min(years), max(years)

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """Records with the given ids, in dataset order."""
        keep = set(ids)
        missing = keep - set(self._index)
        if missing:
            raise KeyError(f"unknown record ids: {sorted(missing)[:5]}")
        return Dataset(self.schema, tuple(r for r in self.records if r.id in keep), self.load_report)

    def filter(self, predicate) -> "Dataset":
        return Dataset(self.schema, tuple(r for r in self.records if predicate(r)), self.load_report)

    def treated(self) -> tuple[SubmissionRecord, ...]:
        return tuple(r for r in self.records if r.treatment)

    def controls(self) -> tuple[SubmissionRecord, ...]:
        return tuple(r for r in self.records if not r.treatment)

    def column(self, name: str, ids: Sequence[str] | None = None) -> np.ndarray:
        """Covariate values as an array (float for numeric/binary, object for categorical)."""
        recs = self.records if ids is None else [self[i] for i in ids]
        kind = self.schema[name].kind
        if kind == CATEGORICAL:
            return np.array([r.covariates[name] for r in recs], dtype=object)
        return np.array([r.covariates[name] for r in recs], dtype=float)

    def outcomes(self) -> dict[str, bool]:
        return {r.id: r.outcome for r in self.records}

    def nco_values(self) -> dict[str, bool]:
        return {r.id: bool(r.nco) for r in self.records if r.nco is not None}

    def citation_counts(self, window_years: int) -> dict[str, int]:
        return {r.id: int(r.citation_counts[window_years]) for r in self.records}

    def sample_id(self) -> str:
        """Content-free identifier of the record set (hash of sorted ids)."""
        h = hashlib.sha256("\n".join(sorted(self._index)).encode("utf-8"))
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class NcoSpec:
    """Binary negative control: ``N = 1`` iff ``CC^(n) > threshold``."""

    window_years: int
    quantile: float
    threshold: float
    eligible_year_cutoff: int
    evaluation_year: int = DEFAULT_EVALUATION_YEAR
    sample_id: str = ""
    sample_size: int = 0
    n_positive: int = 0

    @property
    def constant(self) -> bool:
        """True when every retained record has the same N (the contrast carries no NCO information)."""
        return self.n_positive in (0, self.sample_size)

    @property
    def label(self) -> str:
        return f"n{self.window_years}_q{self.quantile:g}"

    def to_dict(self) -> dict:
        return {
            "window_years": self.window_years,
            "quantile": self.quantile,
            "threshold": self.threshold,
            "eligible_year_cutoff": self.eligible_year_cutoff,
            "evaluation_year": self.evaluation_year,
            "sample_id": self.sample_id,
            "sample_size": self.sample_size,
            "n_positive": self.n_positive,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NcoSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def add_years(day: dt.date, years: int) -> dt.date:
    """Same month/day ``years`` later; Feb 29 maps to Feb 28 in non-leap years."""
    try:
        return day.replace(year=day.year + years)
    except ValueError:
        return day.replace(year=day.year + years, day=28)


def compute_citation_window(
    publication_date: dt.date, citing_dates: Iterable[dt.date], window_years: int
) -> int:
    """Number of citing papers dated within the closed window
    ``[publication_date, publication_date + window_years]``."""
    if window_years < 1:
        raise ValueError(f"window_years must be >= 1, got {window_years}")
    end = add_years(publication_date, window_years)
    return sum(1 for d in citing_dates if publication_date <= d <= end)


def _parse_date(text: str, row: int, column: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DatasetError(f"unparseable date {text!r}", row, column) from None


def _parse_flag(text: str, row: int, column: str) -> bool:
    t = text.strip()
    if t == "1":
        return True
    if t == "0":
        return False
    raise DatasetError(f"expected 0/1, got {text!r}", row, column)


def _parse_covariate(cov: Covariate, text: str) -> Any:
    # Malformed values are kept raw; validate_schema reports them.
    t = text.strip()
    if t == "":
        return None
    if cov.kind == CATEGORICAL:
        if cov.categories is not None and t not in cov.categories:
            try:
                # "2020.0" and "2020" name the same category
                as_num = float(t)
                if as_num.is_integer() and str(int(as_num)) in cov.categories:
                    return str(int(as_num))
            except ValueError:
                pass
        return t
    try:
        return float(t)
    except ValueError:
        return t


def _open_text(source: bytes | str | Path | IO) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8-sig"))
    if isinstance(source, (str, Path)):
        return io.StringIO(Path(source).read_bytes().decode("utf-8-sig"))
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    return io.StringIO(data)


def load_dataset(
    source: bytes | str | Path | IO,
    schema: CovariateSchema,
    windows: Sequence[int] = DEFAULT_WINDOWS,
) -> Dataset:
    """Parse a study CSV into a :class:`Dataset`.

    Rows without a publication date are dropped (and listed in the load
    report). Citation counts come from ``cc_<n>`` columns when present,
    otherwise from the ``;``-separated ``citing_dates`` column; a row with
    neither gets zero citations.

    Raises
    ------
    DatasetError
        Missing or unexpected columns, unparseable dates, non-0/1
        treatment/outcome, duplicate ids.
    """
    reader = csv.DictReader(_open_text(source))
    header = list(reader.fieldnames or [])
    if not header:
        raise DatasetError("empty input: no header row")
    cc_cols = {int(m.group(1)): col for col in header if (m := _CC_COLUMN.match(col))}
    required = ["id", "treatment", "outcome", "publication_date", *schema.names]
    missing = [c for c in required if c not in header]
    if missing:
        raise DatasetError(f"missing columns: {missing}", row=0, column=missing[0])
    if "citing_dates" not in header and not cc_cols:
        raise DatasetError(
            "need a citing_dates column or precomputed cc_<n> columns", row=0, column="citing_dates"
        )
    allowed = set(required) | {"citing_dates"} | set(cc_cols.values())
    extra = [c for c in header if c not in allowed]
    if extra:
        raise DatasetError(f"unexpected columns: {extra}", row=0, column=extra[0])

    records = []
    dropped = []
    zero_cites = []
    seen: dict[str, int] = {}
    n_rows = 0
    for row_no, row in enumerate(reader, start=1):
        n_rows += 1
        if None in row:
            raise DatasetError("more fields than header columns", row_no)
        rid = (row["id"] or "").strip()
        if not rid:
            raise DatasetError("empty id", row_no, "id")
        if rid in seen:
            raise DatasetError(f"duplicate id {rid!r} (first at row {seen[rid]})", row_no, "id")
        seen[rid] = row_no
        treatment = _parse_flag(row["treatment"] or "", row_no, "treatment")
        outcome = _parse_flag(row["outcome"] or "", row_no, "outcome")
        pub_text = (row["publication_date"] or "").strip()
        citing_text = (row.get("citing_dates") or "").strip()
        citing = tuple(
            _parse_date(part, row_no, "citing_dates") for part in citing_text.split(";") if part.strip()
        )
        if not pub_text:
            dropped.append(rid)
            continue
        pub = _parse_date(pub_text, row_no, "publication_date")
        covariates = {c.name: _parse_covariate(c, row[c.name] or "") for c in schema.entries}

        counts: dict[int, int] = {}
        cc_given = {n: (row[col] or "").strip() for n, col in cc_cols.items()}
        has_record = bool(citing_text) or any(cc_given.values())
        if cc_cols and any(cc_given.values()):
            for n, text in cc_given.items():
                if text == "":
                    raise DatasetError("empty citation count", row_no, cc_cols[n])
                try:
                    value = float(text)
                except ValueError:
                    raise DatasetError(f"non-numeric citation count {text!r}", row_no, cc_cols[n]) from None
                if not value.is_integer():
                    raise DatasetError(f"citation count {text!r} is not an integer", row_no, cc_cols[n])
                counts[n] = int(value)
        else:
            for n in windows:
                counts[n] = compute_citation_window(pub, citing, n)
        if not has_record:
            zero_cites.append(rid)
        records.append(
            SubmissionRecord(
                id=rid,
                treatment=treatment,
                outcome=outcome,
                covariates=covariates,
                publication_date=pub,
                citing_dates=citing,
                citation_counts=counts,
                has_citation_record=has_record,
            )
        )
    report = LoadReport(
        n_rows=n_rows,
        n_loaded=len(records),
        dropped_missing_date=tuple(dropped),
        zero_citation_ids=tuple(zero_cites),
        count_source="cc_columns" if cc_cols else "citing_dates",
    )
    return Dataset(schema, tuple(records), report)


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if not value.is_integer() else str(int(value))
    return str(value)


def write_dataset(dataset: Dataset, target: str | Path | IO[str], windows: Sequence[int] | None = None) -> None:
    """Write a dataset in the ingestion CSV format (precomputed ``cc_<n>`` columns)."""
    if windows is None:
        windows = sorted({n for r in dataset.records for n in r.citation_counts})
    header = ["id", "treatment", "outcome", "publication_date", *dataset.schema.names]
    header += [f"cc_{n}" for n in windows]
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in dataset.records:
            w.writerow(
                [
                    r.id,
                    int(r.treatment),
                    int(r.outcome),
                    r.publication_date.isoformat() if r.publication_date else "",
                    *(_format_value(r.covariates.get(n)) for n in dataset.schema.names),
                    *(r.citation_counts[n] for n in windows),
                ]
            )
    finally:
        if own:
            fh.close()


def nearest_rank_quantile(values: Sequence[float], quantile: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``quantile``."""
    if not 0 < quantile < 1:
        raise NcoError(f"quantile must lie in (0, 1), got {quantile}")
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise NcoError("cannot take a quantile of an empty sample")
    # round() guards against 0.9 * 10 = 9.000000000000002
    rank = math.ceil(round(quantile * ordered.size, 9))
    return float(ordered[max(rank, 1) - 1])


def build_nco(
    dataset: Dataset,
    window_years: int,
    quantile: float,
    evaluation_year: int = DEFAULT_EVALUATION_YEAR,
) -> tuple[NcoSpec, Dataset]:
    """Dichotomize ``CC^(window_years)`` at its empirical ``quantile``.

    Records whose conference year is later than ``evaluation_year -
    window_years`` are dropped (their window is not complete). Retained
    records get ``nco = CC > threshold``.
    """
    if not 0 < quantile < 1:
        raise NcoError(f"quantile must lie in (0, 1), got {quantile}")
    if window_years < 1:
        raise NcoError(f"window_years must be >= 1, got {window_years}")
    cutoff = evaluation_year - window_years
    retained = [r for r in dataset.records if r.year <= cutoff]
    if not retained:
        raise NcoError(f"no records with year <= {cutoff}")
    try:
        counts = [r.citation_counts[window_years] for r in retained]
    except KeyError:
        raise NcoError(f"records carry no {window_years}-year citation counts") from None
    threshold = nearest_rank_quantile(counts, quantile)
    annotated = tuple(replace(r, nco=r.citation_counts[window_years] > threshold) for r in retained)
    out = Dataset(dataset.schema, annotated, dataset.load_report)
    spec = NcoSpec(
        window_years=window_years,
        quantile=float(quantile),
        threshold=threshold,
        eligible_year_cutoff=cutoff,
        evaluation_year=evaluation_year,
        sample_id=out.sample_id(),
        sample_size=len(out),
        n_positive=sum(bool(r.nco) for r in annotated),
    )
    return spec, out


@dataclass(frozen=True)
class Violation:
    record_id: str
    column: str
    problem: str
    value: Any = None

    def to_dict(self) -> dict:
        value = self.value
        if value is not None and not isinstance(value, (int, float, str, bool)):
            value = str(value)
        return {"record_id": self.record_id, "column": self.column, "problem": self.problem, "value": value}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    per_column: Mapping[str, Mapping[str, int]]
    n_records: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "n_records": self.n_records,
            "n_violations": len(self.violations),
            "per_column": {k: dict(v) for k, v in self.per_column.items()},
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_schema(dataset: Dataset) -> ValidationReport:
    """Check every record against the schema and the citation-count invariants."""
    violations: list[Violation] = []
    per_column: dict[str, dict[str, int]] = {
        c.name: {"missing": 0, "kind": 0, "out_of_range": 0} for c in dataset.schema.entries
    }
    per_column["citation_counts"] = {"missing": 0, "kind": 0, "out_of_range": 0}

    def flag(rec, column, bucket, problem, value):
        per_column[column][bucket] += 1
        violations.append(Violation(rec.id, column, problem, value))

    for rec in dataset.records:
        for cov in dataset.schema.entries:
            value = rec.covariates.get(cov.name)
            if value is None or (isinstance(value, float) and math.isnan(value)):
                flag(rec, cov.name, "missing", "missing value", None)
                continue
            if cov.kind == CATEGORICAL:
                if cov.categories is not None and str(value) not in cov.categories:
                    flag(rec, cov.name, "kind", "category not in schema", value)
                continue
            if not isinstance(value, (int, float)):
                flag(rec, cov.name, "kind", "non-numeric value", value)
                continue
            if cov.kind == BINARY and value not in (0, 1):
                flag(rec, cov.name, "kind", "binary covariate not 0/1", value)
                continue
            if cov.integer and not float(value).is_integer():
                flag(rec, cov.name, "kind", "expected an integer value", value)
                continue
            if cov.bounds is not None and not cov.bounds[0] <= value <= cov.bounds[1]:
                flag(rec, cov.name, "out_of_range", f"outside bounds {list(cov.bounds)}", value)

        windows = sorted(rec.citation_counts)
        for n in windows:
            cc = rec.citation_counts[n]
            if cc < 0:
                flag(rec, "citation_counts", "out_of_range", f"negative cc_{n}", cc)
            if rec.citing_dates and cc > len(rec.citing_dates):
                flag(rec, "citation_counts", "out_of_range", f"cc_{n} exceeds number of citing papers", cc)
        for a, b in zip(windows, windows[1:]):
            if rec.citation_counts[a] > rec.citation_counts[b]:
                flag(rec, "citation_counts", "out_of_range", f"cc_{a} > cc_{b} (windows must nest)",
                     rec.citation_counts[a])
    return ValidationReport(tuple(violations), per_column, len(dataset.records))
