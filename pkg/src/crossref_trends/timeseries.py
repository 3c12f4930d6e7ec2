"""Aligned annual count series and the canonical time-series CSV."""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import DataIntegrityError, EmptyInputError, SchemaError, ValidationError

__all__ = [
    "Category",
    "CONTROL_LABEL",
    "AnnualSeries",
    "Dataset",
    "subtract_covid",
    "write_timeseries_csv",
    "read_timeseries_csv",
    "TIMESERIES_FILENAME",
    "TIMESERIES_HEADER",
]


class Category(str, enum.Enum):
    PUBLICATIONS = "Publications"
    RETRACTIONS = "Retractions"
    COVID_RETRACTIONS = "CovidRetractions"
    PREPRINTS = "Preprints"


#: Label of the retraction series with COVID-related notices removed.
CONTROL_LABEL = "Retractions*"

TIMESERIES_FILENAME = "analysis_time_series.csv"
TIMESERIES_HEADER = ("Year", "Publications", "Retractions", "COVID_Retraction", "Preprints")


@dataclass(frozen=True)
class AnnualSeries:
    """Year-indexed counts for one category.

    ``category`` is a :class:`Category` for harvested series or a plain
    label (``"Retractions*"``) for derived ones.
    """

    category: Union[Category, str]
    points: tuple

    def __post_init__(self):
        pts = tuple((int(y), int(c)) for y, c in self.points)
        for (y, c), (y_raw, c_raw) in zip(pts, self.points):
            if y != y_raw or c != c_raw:
                raise ValidationError(f"non-integer point ({y_raw!r}, {c_raw!r})")
        for i, (year, count) in enumerate(pts):
            if count < 0:
                raise ValidationError(f"negative count {count} at year {year}")
            if i and year != pts[i - 1][0] + 1:
                raise ValidationError(
                    f"years must be consecutive and increasing; {pts[i - 1][0]} followed by {year}"
                )
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_counts(cls, category, first_year: int, counts: Iterable[int]) -> "AnnualSeries":
        return cls(category, tuple((first_year + i, c) for i, c in enumerate(counts)))

    @property
    def label(self) -> str:
        return self.category.value if isinstance(self.category, Category) else str(self.category)

    @property
    def years(self) -> list:
        return [y for y, _ in self.points]

    @property
    def counts(self) -> list:
        return [c for _, c in self.points]

    def __len__(self):
        return len(self.points)

    def __getitem__(self, year: int) -> int:
        first = self.points[0][0] if self.points else 0
        idx = year - first
        if not self.points or idx < 0 or idx >= len(self.points):
            raise KeyError(year)
        return self.points[idx][1]


@dataclass(frozen=True)
class Dataset:
    """The four harvested series on one shared year axis."""

    publications: AnnualSeries
    retractions: AnnualSeries
    covid_retractions: AnnualSeries
    preprints: AnnualSeries

    def __post_init__(self):
        axes = {tuple(s.years) for s in self.series()}
        if len(axes) != 1:
            raise ValidationError("all four series must share the same year axis")
        if not self.publications.points:
            raise EmptyInputError("dataset has no years")
        for year, total, covid in zip(self.years, self.retractions.counts, self.covid_retractions.counts):
            if covid > total:
                raise ValidationError(
                    f"COVID retractions ({covid}) exceed retractions ({total}) in {year}"
                )

    @classmethod
    def from_columns(cls, years: Sequence[int], publications, retractions, covid_retractions, preprints):
        if not years:
            raise EmptyInputError("dataset has no years")
        first = years[0]
        return cls(
            AnnualSeries.from_counts(Category.PUBLICATIONS, first, publications),
            AnnualSeries.from_counts(Category.RETRACTIONS, first, retractions),
            AnnualSeries.from_counts(Category.COVID_RETRACTIONS, first, covid_retractions),
            AnnualSeries.from_counts(Category.PREPRINTS, first, preprints),
        )

    @property
    def years(self) -> list:
        return self.publications.years

    def series(self):
        return (self.publications, self.retractions, self.covid_retractions, self.preprints)

    def by_category(self, category: Category) -> AnnualSeries:
        return {
            Category.PUBLICATIONS: self.publications,
            Category.RETRACTIONS: self.retractions,
            Category.COVID_RETRACTIONS: self.covid_retractions,
            Category.PREPRINTS: self.preprints,
        }[Category(category)]


def subtract_covid(dataset: Dataset) -> AnnualSeries:
    """Retractions minus COVID-related retractions, labelled ``Retractions*``."""
    points = []
    for (year, total), (_, covid) in zip(dataset.retractions.points, dataset.covid_retractions.points):
        diff = total - covid
        if diff < 0:
            raise DataIntegrityError(f"COVID subtraction goes negative in {year}")
        points.append((year, diff))
    return AnnualSeries(CONTROL_LABEL, tuple(points))


def write_timeseries_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    rows = zip(
        dataset.years,
        dataset.publications.counts,
        dataset.retractions.counts,
        dataset.covid_retractions.counts,
        dataset.preprints.counts,
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_HEADER)
        for row in rows:
            writer.writerow([str(int(v)) for v in row])


def _parse_int(text: str, column: str, row: int) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise ValidationError(f"row {row}: {column} value {text!r} is not an integer", row=row) from None
    if value < 0:
        raise ValidationError(f"row {row}: {column} value {value} is negative", row=row)
    return value


def read_timeseries_csv(path) -> Dataset:
    """Parse ``analysis_time_series.csv`` into a validated :class:`Dataset`.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(os.fspath(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, expected header {','.join(TIMESERIES_HEADER)}")
        if tuple(h.strip() for h in header) != TIMESERIES_HEADER:
            raise SchemaError(
                f"{path}: header {','.join(header)!r} does not match {','.join(TIMESERIES_HEADER)!r}"
            )
        columns = {name: [] for name in TIMESERIES_HEADER}
        prev_year = None
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TIMESERIES_HEADER):
                raise ValidationError(f"row {row_no}: expected {len(TIMESERIES_HEADER)} fields", row=row_no)
            values = [_parse_int(v, name, row_no) for v, name in zip(row, TIMESERIES_HEADER)]
            year = values[0]
            if prev_year is not None:
                if year <= prev_year:
                    raise ValidationError(f"row {row_no}: year {year} is not after {prev_year}", row=row_no)
                if year != prev_year + 1:
                    raise ValidationError(f"row {row_no}: gap between {prev_year} and {year}", row=row_no)
            if values[3] > values[2]:
                raise ValidationError(
                    f"row {row_no}: COVID_Retraction exceeds Retractions", row=row_no
                )
            prev_year = year
            for name, v in zip(TIMESERIES_HEADER, values):
                columns[name].append(v)
    if not columns["Year"]:
        raise ValidationError(f"{path}: no data rows")
    return Dataset.from_columns(
        columns["Year"],
        columns["Publications"],
        columns["Retractions"],
        columns["COVID_Retraction"],
        columns["Preprints"],
    )
