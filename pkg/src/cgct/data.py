"""Country-level panel: loading, validation, kNN imputation, and min-max scaling.

The canonical input is a UTF-8, comma-delimited CSV with a header row and one
row per (country, year). Empty cells mark missing values; they are allowed in
covariate columns only (see docs/data_format.md for the column list and units).
All downstream components consume the :class:`Dataset` produced here, and all
scaling is owned by :class:`MinMaxScaler` instances fitted on training data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: Canonical covariate order. Units are documented in docs/data_format.md.
FEATURE_NAMES = [
    "gdp_pc_ppp_usd_k",
    "gdp_growth_pct",
    "fdi_usd_bn",
    "cpi_inflation_pct",
    "unemployment_pct",
    "population_mn",
    "fertility_births",
    "maternal_mortality_per_100k",
    "infant_mortality_per_1k",
    "life_expectancy_years",
    "school_enrolment_ratio",
    "undernourishment_pct",
    "electricity_access_pct",
    "tuberculosis_per_100k",
]

NUM_FEATURES = 14

#: Non-covariate columns every file must carry.
REQUIRED_COLUMNS = ["country", "year", "outcome_reduction_pct", "aid_usd_mn",
                    "hiv_infection_rate_per_1k"] + FEATURE_NAMES

#: Covariates that may never be missing (population feeds the head-count
#: fields below, so an empty cell would leave the record unusable).
ALWAYS_PRESENT = {"population_mn"}


class DataFormatError(ValueError):
    """Raised when a CSV file violates the documented schema."""


@dataclass
class CountryRecord:
    """One country-year observation.

    ``outcome_y`` is the relative reduction in the HIV infection rate as a
    fraction (0.0326 for 3.26%). ``treatment_a`` is development aid in USD
    millions. ``covariates`` follows FEATURE_NAMES order with NaN marking
    missing entries. ``infection_rate_r`` is new infections per person per
    year (the per-1,000 CSV rate divided by 1,000); ``population_p`` is in
    persons.
    """

    country_id: str
    year: int
    outcome_y: float
    treatment_a: float
    covariates: np.ndarray
    infection_rate_r: float
    population_p: float

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.covariates.shape != (NUM_FEATURES,):
            raise ValueError(
                f"{self.country_id}: expected {NUM_FEATURES} covariates, "
                f"got shape {self.covariates.shape}")
        if self.treatment_a < 0:
            raise ValueError(f"{self.country_id}: negative aid volume")
        if not self.population_p > 0:
            raise ValueError(f"{self.country_id}: population must be positive")
        if self.infection_rate_r < 0:
            raise ValueError(f"{self.country_id}: negative infection rate")

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.covariates)


@dataclass
class Dataset:
    """Ordered collection of records for a single year."""

    records: list[CountryRecord]
    feature_names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    def __post_init__(self):
        if not self.records:
            raise ValueError("dataset must contain at least one record")
        years = {r.year for r in self.records}
        if len(years) != 1:
            raise ValueError(f"records span multiple years: {sorted(years)}")
        ids = [r.country_id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({c for c in ids if ids.count(c) > 1})
            raise ValueError(f"duplicate country ids within year: {dupes}")

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def year(self) -> int:
        return self.records[0].year

    @property
    def country_ids(self) -> list[str]:
        return [r.country_id for r in self.records]

    def covariate_matrix(self) -> np.ndarray:
        return np.array([r.covariates for r in self.records])

    def outcomes(self) -> np.ndarray:
        return np.array([r.outcome_y for r in self.records])

    def treatments(self) -> np.ndarray:
        return np.array([r.treatment_a for r in self.records])

    def infection_rates(self) -> np.ndarray:
        return np.array([r.infection_rate_r for r in self.records])

    def populations(self) -> np.ndarray:
        return np.array([r.population_p for r in self.records])

    def has_missing(self) -> bool:
        return any(r.missing_mask.any() for r in self.records)

    def record_for(self, country_id: str) -> CountryRecord:
        for r in self.records:
            if r.country_id == country_id:
                return r
        raise KeyError(country_id)


def _parse_cell(value: str, column: str, row_idx: int):
    text = value.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(
            f"row {row_idx}: non-numeric value {value!r} in column {column!r}")


def load_dataset(csv_path: str | Path, year: int) -> Dataset:
    """Read the records of one year from a panel CSV.

    Missing covariate cells (empty strings) are preserved as NaN so that
    :func:`impute_knn` can fill them later. Raises :class:`DataFormatError`
    for schema violations and ValueError when the year has no rows.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing_cols:
            raise DataFormatError(f"{csv_path.name}: missing columns {missing_cols}")
        records = []
        for idx, row in enumerate(reader, start=2):
            if int(float(row["year"])) != year:
                continue
            cells = {c: _parse_cell(row[c], c, idx) for c in REQUIRED_COLUMNS if c != "country"}
            for col in ("outcome_reduction_pct", "aid_usd_mn", "hiv_infection_rate_per_1k"):
                if np.isnan(cells[col]):
                    raise DataFormatError(f"row {idx}: column {col!r} may not be empty")
            for col in ALWAYS_PRESENT:
                if np.isnan(cells[col]):
                    raise DataFormatError(f"row {idx}: column {col!r} may not be empty")
            covariates = np.array([cells[name] for name in FEATURE_NAMES])
            records.append(CountryRecord(
                country_id=row["country"].strip(),
                year=year,
                outcome_y=cells["outcome_reduction_pct"] / 100.0,
                treatment_a=cells["aid_usd_mn"],
                covariates=covariates,
                infection_rate_r=cells["hiv_infection_rate_per_1k"] / 1000.0,
                population_p=cells["population_mn"] * 1e6,
            ))
    if not records:
        raise ValueError(f"{csv_path.name}: no rows for year {year}")
    return Dataset(records)


def bundled_data_path() -> Path:
    """Location of the synthetic benchmark panel shipped with the package."""
    return Path(__file__).parent / "datasets" / "hiv_aid_panel.csv"


class MinMaxScaler:
    """Per-dimension affine map of fitted data onto [0, 1].

    Constant dimensions map to 0 (the fitted range is degenerate, so the
    inverse recovers the constant from the stored minimum).
    """

    def __init__(self):
        self.min_ = None
        self.max_ = None

    def fit(self, x: np.ndarray) -> "MinMaxScaler":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] < 2:
            raise ValueError("min-max scaler needs at least 2 rows to fit")
        if np.isnan(x).any():
            raise ValueError("cannot fit scaler on data with missing values")
        self.min_ = x.min(axis=0)
        self.max_ = x.max(axis=0)
        return self

    def _check(self):
        if self.min_ is None:
            raise RuntimeError("scaler used before fit")

    @property
    def range_(self) -> np.ndarray:
        self._check()
        return self.max_ - self.min_

    def transform(self, x: np.ndarray) -> np.ndarray:
        self._check()
        x = np.asarray(x, dtype=float)
        span = self.max_ - self.min_
        safe = np.where(span > 0, span, 1.0)
        out = (x - self.min_) / safe
        return np.where(span > 0, out, 0.0)

    def inverse(self, x_scaled: np.ndarray) -> np.ndarray:
        self._check()
        x_scaled = np.asarray(x_scaled, dtype=float)
        span = self.max_ - self.min_
        return np.where(span > 0, x_scaled * span + self.min_, self.min_)

    def to_dict(self) -> dict:
        self._check()
        return {"min": self.min_.tolist(), "max": self.max_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        s = cls()
        s.min_ = np.asarray(d["min"], dtype=float)
        s.max_ = np.asarray(d["max"], dtype=float)
        return s


def impute_knn(dataset: Dataset, k: int = 5) -> Dataset:
    """Fill missing covariates with the mean over the k nearest rows.

    Distances are Euclidean over the covariates observed in *both* rows,
    computed on min-max-scaled values and normalized by the number of shared
    dimensions, so rows with different missingness patterns stay comparable.
    All imputations are computed from the original (unimputed) data; observed
    values are never altered.
    """
    n = dataset.n
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of rows n={n}")
    x = dataset.covariate_matrix()
    observed = ~np.isnan(x)
    col_counts = observed.sum(axis=0)
    thin = [dataset.feature_names[j] for j in np.nonzero(col_counts < k)[0]]
    if thin:
        raise ValueError(f"columns with fewer than k={k} observed values: {thin}")

    col_min = np.nanmin(x, axis=0)
    col_max = np.nanmax(x, axis=0)
    span = np.where(col_max > col_min, col_max - col_min, 1.0)
    xs = (x - col_min) / span
    xs = np.where(col_max > col_min, xs, 0.0)

    filled = x.copy()
    for i in range(n):
        miss_cols = np.nonzero(~observed[i])[0]
        if miss_cols.size == 0:
            continue
        diff = xs - xs[i]
        shared = observed & observed[i]
        sq = np.where(shared, diff ** 2, 0.0)
        counts = shared.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            dist = np.sqrt(sq.sum(axis=1) / counts)
        dist[counts == 0] = np.inf
        dist[i] = np.inf
        for j in miss_cols:
            cand = np.nonzero(observed[:, j])[0]
            cand = cand[cand != i]
            order = cand[np.argsort(dist[cand], kind="stable")][:k]
            filled[i, j] = x[order, j].mean()

    records = []
    for i, r in enumerate(dataset.records):
        records.append(CountryRecord(
            country_id=r.country_id, year=r.year, outcome_y=r.outcome_y,
            treatment_a=r.treatment_a, covariates=filled[i],
            infection_rate_r=r.infection_rate_r, population_p=r.population_p))
    return Dataset(records, list(dataset.feature_names))
