"""Reference reconstructions: day-of-year climatology and POD with pivoted-QR sensors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InsufficientData, InvalidArgument, NumericError
from .fields import DAYS_PER_YEAR, Field, FieldSeries
from .io import read_checkpoint, write_checkpoint


@dataclass(frozen=True, eq=False)
class Climatology:
    day_mean: np.ndarray  # (365, rows, cols)
    counts: np.ndarray    # (365,) contributing years; identical for every sea cell
    land: np.ndarray

    def predict(self, stamps) -> FieldSeries:
        stamps = np.asarray(stamps).reshape(-1, 2)
        return FieldSeries(self.day_mean[stamps[:, 1] - 1], self.land, stamps)


def fit_climatology(train: FieldSeries) -> Climatology:
    """Per-day, per-cell mean over the training years."""
    days = train.days
    counts = np.bincount(days - 1, minlength=DAYS_PER_YEAR)
    missing = np.flatnonzero(counts == 0) + 1
    if len(missing):
        shown = ", ".join(map(str, missing[:10])) + (" ..." if len(missing) > 10 else "")
        raise InsufficientData(f"{len(missing)} days of year absent from the training set: {shown}")
    sums = np.zeros((DAYS_PER_YEAR,) + train.land.shape)
    np.add.at(sums, days - 1, train.values)
    return Climatology(sums / counts[:, None, None], counts, train.land)


@dataclass(frozen=True, eq=False)
class PODBasis:
    mu: Field
    W: np.ndarray                 # (n_sea, r), orthonormal columns
    singular_values: np.ndarray   # (r,), non-increasing
    sensors: np.ndarray           # sea-cell indices in pivot order

    @property
    def land(self) -> np.ndarray:
        return self.mu.land

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def sensor_cells(self) -> list[tuple[int, int]]:
        cells = np.argwhere(~self.land)
        return [(int(r), int(c)) for r, c in cells[self.sensors]]


def fit_pod(train: FieldSeries, r: int) -> PODBasis:
    X = train.sea_matrix()
    T, n = X.shape
    if not 1 <= r <= min(T, n):
        raise InvalidArgument(f"modes must lie in 1..{min(T, n)}, got {r}")
    mu = X.mean(axis=0)
    U, s, _ = np.linalg.svd((X - mu).T, full_matrices=False)
    if s[0] <= 0:
        raise InsufficientData("centered data are identically zero: all singular values vanish")
    basis = PODBasis(Field.from_sea_vector(mu, train.land), U[:, :r], s[:r], np.zeros(0, np.int64))
    return PODBasis(basis.mu, basis.W, basis.singular_values, qr_pivot_sensors(basis))


def qr_pivot_sensors(basis: PODBasis, tol: float = 1e-12) -> np.ndarray:
    """First r column pivots of the column-pivoted QR of W^T."""
    R, piv = linalg.qr(basis.W.T, mode="r", pivoting=True)
    r = basis.rank
    diag = np.abs(np.diag(R))[:r]
    good = diag >= tol * max(diag[0], tol) if len(diag) else diag.astype(bool)
    if not good.all():
        keep = int(np.argmin(good))
        warnings.warn(f"pivoted QR is rank deficient: {keep} of {r} sensors usable", RuntimeWarning)
        return piv[:keep].astype(np.int64)
    return piv[:r].astype(np.int64)


def pod_reconstruct(basis: PODBasis, measurements) -> Field:
    """mu + W (P_s W)^{-1} (m - P_s mu) for measurements m at the basis sensors."""
    vec = pod_reconstruct_matrix(basis, np.asarray(measurements, dtype=np.float64)[None, :])[0]
    return Field.from_sea_vector(vec, basis.land)


def pod_reconstruct_matrix(basis: PODBasis, M: np.ndarray) -> np.ndarray:
    """Row-wise reconstruction of (B, n_sensors) measurements to (B, n_sea)."""
    M = np.atleast_2d(M)
    s = basis.sensors
    if M.shape[1] != len(s):
        raise InvalidArgument(f"expected {len(s)} measurements, got {M.shape[1]}")
    mu = basis.mu.sea_values()
    A = basis.W[s]
    if A.shape[0] != A.shape[1]:
        # rank-deficient basis: fewer sensors than modes, least squares on the span
        coeffs = np.linalg.lstsq(A, (M - mu[s]).T, rcond=None)[0]
    else:
        try:
            coeffs = np.linalg.solve(A, (M - mu[s]).T)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular sensor system in POD reconstruction") from exc
    return mu + (basis.W @ coeffs).T


def pod_reconstruct_series(basis: PODBasis, series: FieldSeries) -> FieldSeries:
    M = series.sea_matrix()[:, basis.sensors]
    return FieldSeries.from_sea_matrix(pod_reconstruct_matrix(basis, M), series.land, series.stamps)


def save_pod(path, basis: PODBasis) -> None:
    write_checkpoint(path, {
        "MU": basis.mu.values,
        "W": basis.W,
        "SV": basis.singular_values,
        "SENSORS": basis.sensors.astype(np.float64),
        "LAND": basis.land.astype(np.float64),
    })


def load_pod(path) -> PODBasis:
    s = read_checkpoint(path)
    land = s["LAND"].astype(bool)
    return PODBasis(Field(s["MU"], land), s["W"], s["SV"], s["SENSORS"].astype(np.int64))
