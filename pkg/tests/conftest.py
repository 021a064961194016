import numpy as np
import pytest

from sensorplace.entropy import PatchBin, PatchModel
from sensorplace.fields import FieldSeries, raster_ordering


def daily_stamps(T, start_year=2000):
    t = np.arange(T)
    return np.column_stack([start_year + t // 365, t % 365 + 1])


def make_series(values, land=None, start_year=2000):
    values = np.asarray(values, dtype=np.float64)
    if land is None:
        land = np.zeros(values.shape[1:], bool)
    return FieldSeries(values, land, daily_stamps(len(values), start_year))


def gaussian_model(cov, mean=None, ordering=None, shrinkage=0.0):
    """Single-bin PatchModel with the given covariance, no fitting."""
    cov = np.asarray(cov, dtype=np.float64)
    d = len(cov)
    L = int(round(np.sqrt(d)))
    ordering = ordering or raster_ordering(L)
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=np.float64)
    chol = np.linalg.cholesky(cov + shrinkage * np.eye(d))
    return PatchModel(ordering, [PatchBin((0, 0), 100, mean, chol, shrinkage)])


def random_spd(rng, d):
    A = rng.standard_normal((d, d))
    return A @ A.T + 0.1 * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, one line per criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
