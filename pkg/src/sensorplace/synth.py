"""Synthetic ocean-like field series.

    S(i, j, t) = cycle(i, j, d) + sum_m a_m(t) phi_m(i, j) + drift(y) + noise

Spatial modes are sums of separable Gaussian bumps, amplified threefold
inside a band of rows that plays the role of a frontal zone. Mode amplitudes
combine an annual harmonic with a unit-variance AR(1) process. All
randomness comes from counter-based Philox streams keyed by the seed, so a
fixed seed gives bit-identical output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .fields import DAYS_PER_YEAR, FieldSeries, GridShape

_MODES, _AMPS, _NOISE = 1, 2, 3
BAND_GAIN = 3.0


@dataclass(frozen=True)
class SynthConfig:
    rows: int = 64
    cols: int = 64
    years: int = 2
    rank: int = 6
    seasonal_amp: float = 2.0
    mode_amp: float = 1.0
    drift_amp: float = 0.5
    front_band: tuple[int, int] = (24, 40)
    noise_sigma: float = 0.1
    land_fraction: float = 0.1
    ar_coef: float = 0.9
    bumps_per_mode: int = 3
    start_year: int = 2000
    seed: int = 0

    def __post_init__(self):
        GridShape(self.rows, self.cols)
        lo, hi = self.front_band
        if self.rank < 1:
            raise InvalidArgument("rank must be >= 1")
        if self.years < 2:
            raise InvalidArgument("years must be >= 2")
        if self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be >= 0")
        if not 0.0 <= self.land_fraction < 1.0:
            raise InvalidArgument("land_fraction must lie in [0, 1)")
        if not 0 <= lo < hi <= self.rows:
            raise InvalidArgument(f"front_band {self.front_band} outside 0..{self.rows}")
        if not -1.0 < self.ar_coef < 1.0:
            raise InvalidArgument("ar_coef must lie in (-1, 1)")
        if self.seed < 0:
            raise InvalidArgument("seed must be non-negative")

    @property
    def shape(self) -> GridShape:
        return GridShape(self.rows, self.cols)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def land_mask(cfg: SynthConfig) -> np.ndarray:
    land = np.zeros((cfg.rows, cfg.cols), dtype=bool)
    land[:, : int(cfg.land_fraction * cfg.cols)] = True
    return land


def spatial_modes(cfg: SynthConfig) -> np.ndarray:
    """(rank, rows, cols) smooth modes, max |phi| = 1 before band amplification."""
    rng = _stream(cfg.seed, _MODES)
    ii = np.arange(cfg.rows)[:, None]
    jj = np.arange(cfg.cols)[None, :]
    modes = np.zeros((cfg.rank, cfg.rows, cfg.cols))
    for m in range(cfg.rank):
        for _ in range(cfg.bumps_per_mode):
            ci, cj = rng.uniform(0, cfg.rows), rng.uniform(0, cfg.cols)
            si = rng.uniform(0.08, 0.25) * cfg.rows
            sj = rng.uniform(0.08, 0.25) * cfg.cols
            amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
            modes[m] += amp * np.exp(-0.5 * ((ii - ci) / si) ** 2) * np.exp(-0.5 * ((jj - cj) / sj) ** 2)
        peak = np.abs(modes[m]).max()
        if peak > 0:
            modes[m] /= peak
    lo, hi = cfg.front_band
    modes[:, lo:hi, :] *= BAND_GAIN
    return modes


def mode_amplitudes(cfg: SynthConfig, days: np.ndarray) -> np.ndarray:
    """(T, rank) amplitudes: annual harmonic plus unit-variance AR(1)."""
    rng = _stream(cfg.seed, _AMPS)
    T = len(days)
    phase = rng.uniform(0, 2 * np.pi, cfg.rank)
    harmonic = rng.uniform(0.3, 1.0, cfg.rank)
    energy = (1.0 + np.arange(cfg.rank)) ** -0.5
    innov = rng.standard_normal((T, cfg.rank))
    ar = np.empty((T, cfg.rank))
    ar[0] = innov[0]
    scale = np.sqrt(1.0 - cfg.ar_coef ** 2)
    for t in range(1, T):
        ar[t] = cfg.ar_coef * ar[t - 1] + scale * innov[t]
    angle = 2 * np.pi * (days[:, None] - 1) / DAYS_PER_YEAR + phase[None, :]
    return cfg.mode_amp * energy * (harmonic * np.cos(angle) + ar)


def climate_cycle(cfg: SynthConfig, days: np.ndarray) -> np.ndarray:
    """(T, rows, cols) deterministic day-of-year cycle."""
    lat = 0.5 + 0.5 * np.arange(cfg.rows)[:, None] / max(cfg.rows - 1, 1)
    lag = 0.5 * np.arange(cfg.cols)[None, :] / cfg.cols
    angle = 2 * np.pi * (days[:, None, None] - 1) / DAYS_PER_YEAR - lag[None]
    return cfg.seasonal_amp * lat[None] * np.cos(angle)


def generate(cfg: SynthConfig) -> FieldSeries:
    T = cfg.years * DAYS_PER_YEAR
    year_idx = np.repeat(np.arange(cfg.years), DAYS_PER_YEAR)
    days = np.tile(np.arange(1, DAYS_PER_YEAR + 1), cfg.years)
    values = climate_cycle(cfg, days)
    values += np.einsum("tm,mij->tij", mode_amplitudes(cfg, days), spatial_modes(cfg))
    values += cfg.drift_amp * year_idx[:, None, None]
    if cfg.noise_sigma > 0:
        # one keyed stream per time slice, so slices are independent of each other
        for t in range(T):
            values[t] += cfg.noise_sigma * _stream(cfg.seed, _NOISE, t).standard_normal((cfg.rows, cfg.cols))
    stamps = np.column_stack([cfg.start_year + year_idx, days])
    return FieldSeries(values, land_mask(cfg), stamps)
