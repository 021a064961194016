"""Bias and RMSE as fields (time means) and series (spatial means), with median summaries."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .fields import Field, FieldSeries


def _errors(recon: FieldSeries, ref: FieldSeries) -> np.ndarray:
    if len(recon) != len(ref) or not np.array_equal(recon.stamps, ref.stamps):
        raise InvalidArgument("reconstruction and reference stamps are misaligned")
    if not np.array_equal(recon.land, ref.land):
        raise InvalidArgument("reconstruction and reference land masks differ")
    if len(ref) == 0:
        raise InvalidArgument("empty series")
    return recon.sea_matrix() - ref.sea_matrix()


def bias_field(recon: FieldSeries, ref: FieldSeries) -> Field:
    return Field.from_sea_vector(_errors(recon, ref).mean(axis=0), ref.land)


def bias_series(recon: FieldSeries, ref: FieldSeries) -> np.ndarray:
    return _errors(recon, ref).mean(axis=1)


def rmse_field(recon: FieldSeries, ref: FieldSeries) -> Field:
    return Field.from_sea_vector(np.sqrt((_errors(recon, ref) ** 2).mean(axis=0)), ref.land)


def rmse_series(recon: FieldSeries, ref: FieldSeries) -> np.ndarray:
    return np.sqrt((_errors(recon, ref) ** 2).mean(axis=1))


def lower_median(x) -> float:
    """Median; for even lengths the lower of the two middle values."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    if len(x) == 0:
        raise InvalidArgument("median of an empty series")
    return float(x[(len(x) - 1) // 2])


@dataclass(frozen=True, eq=False)
class EvalReport:
    method: str
    sensor_count: int
    bias_field: Field
    rmse_field: Field
    bias_series: np.ndarray
    rmse_series: np.ndarray
    med_bias: float
    med_rmse: float


def summarize(method: str, sensor_count: int, recon: FieldSeries, ref: FieldSeries) -> EvalReport:
    bs = bias_series(recon, ref)
    rs = rmse_series(recon, ref)
    return EvalReport(
        method, int(sensor_count),
        bias_field(recon, ref), rmse_field(recon, ref),
        bs, rs, lower_median(bs), lower_median(rs),
    )


TABLE_HEADER = ("Method", "Number of sensors", "MED(Bias)", "MED(RMSE)")


def format_table(rows, precision: int = 2) -> str:
    """Aligned text table; rows are (method, sensors, med_bias, med_rmse)."""
    body = [(m, str(int(k)), f"{b:.{precision}f}", f"{r:.{precision}f}") for m, k, b, r in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(TABLE_HEADER)]

    def line(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest])

    sep = "-" * len(line(TABLE_HEADER))
    return "\n".join([line(TABLE_HEADER), sep, *(line(r) for r in body)]) + "\n"


def write_table_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "sensors", "med_bias", "med_rmse"])
        for m, k, b, r in rows:
            w.writerow([m, int(k), f"{b:.6f}", f"{r:.6f}"])


def read_table_csv(path) -> list[tuple[str, int, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(m, int(k), float(b), float(r)) for m, k, b, r in reader]


def write_series_csv(path, report: EvalReport, stamps) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "day", "bias", "rmse"])
        for (y, d), b, r in zip(np.asarray(stamps), report.bias_series, report.rmse_series):
            w.writerow([int(y), int(d), f"{b:.6f}", f"{r:.6f}"])
