"""Sensor-location prior from an entropy field, sampling and mask initialization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import EntropyField
from .errors import InsufficientData, InvalidArgument
from .fields import Field

DEFAULT_TAU = 0.2


@dataclass(frozen=True, eq=False)
class PriorField:
    p: Field
    tau: float

    @property
    def support(self) -> np.ndarray:
        return np.nan_to_num(self.p.values, nan=0.0) > 0


@dataclass(frozen=True, eq=False)
class SensorSet:
    locations: list[tuple[int, int]]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.locations)


@dataclass(frozen=True, eq=False)
class MaskParams:
    """Mask logits per cell; land cells hold -inf and never switch on."""

    w: Field

    @property
    def land(self) -> np.ndarray:
        return self.w.land

    def sea_vector(self) -> np.ndarray:
        return self.w.values[~self.w.land]


def sensor_prior(H: EntropyField, tau: float = DEFAULT_TAU) -> PriorField:
    """Softmax of H / tau over valid sea cells; land and flagged cells get 0."""
    if not tau > 0:
        raise InvalidArgument(f"tau must be positive, got {tau}")
    vals = H.H.values
    use = H.valid & ~H.land & np.isfinite(vals)
    if not use.any():
        raise InsufficientData("entropy field has no valid sea cells")
    logits = vals[use] / tau
    e = np.exp(logits - logits.max())
    p = np.zeros(vals.shape)
    p[use] = e / e.sum()
    return PriorField(Field(p, H.land), tau)


def sample_sensors(prior: PriorField, k: int, seed: int) -> SensorSet:
    """k distinct cells drawn without replacement, via Gumbel-top-k on ln p."""
    support = prior.support & ~prior.p.land
    cells = np.argwhere(support)
    if not 0 <= k <= len(cells):
        raise InvalidArgument(f"cannot draw {k} sensors from {len(cells)} positive-probability cells")
    rng = np.random.default_rng(seed)
    keys = np.log(prior.p.values[support]) + rng.gumbel(size=len(cells))
    top = np.argsort(-keys, kind="stable")[:k]
    return SensorSet([(int(r), int(c)) for r, c in cells[top]], seed)


def init_mask_params(prior: PriorField, k0: int, seed: int | None = None) -> MaskParams:
    """w = ln p - q, with q placed so that exactly k0 sea cells have w >= 0.

    Without a seed the k0 highest-prior cells switch on: q sits midway between
    the k0-th and (k0+1)-th largest ln p, a (1 - k0/n) quantile of ln p. Ties
    at the threshold are broken by row-major cell index, and tied cells past
    rank k0 are nudged just below zero.

    With a seed, i.i.d. Gumbel noise is added to ln p before thresholding, so
    the cells that switch on are a draw of k0 cells without replacement from
    the prior (the same draw as ``sample_sensors(prior, k0, seed)``).

    Cells with p = 0 (flagged) get ln p of the smallest positive cell minus 10;
    land gets -inf.
    """
    land = prior.p.land
    sea = ~land
    n = int(sea.sum())
    if not 1 <= k0 <= n:
        raise InvalidArgument(f"k0 must lie in 1..{n}, got {k0}")
    p = prior.p.values[sea]
    pos = p > 0
    logp = np.full(n, -np.inf)
    logp[pos] = np.log(p[pos])
    floor = logp[pos].min() - 10.0 if pos.any() else -10.0
    logp[~pos] = floor
    if seed is not None:
        keys = np.full(n, -np.inf)
        keys[pos] = logp[pos] + np.random.default_rng(seed).gumbel(size=int(pos.sum()))
        # flagged cells rank after every positive-probability cell
        keys[~pos] = (keys[pos].min() if pos.any() else 0.0) - 10.0 - np.arange(int((~pos).sum()))
        logp = keys
    order = np.argsort(-logp, kind="stable")
    kth = logp[order[k0 - 1]]
    if k0 < n:
        nxt = logp[order[k0]]
        q = 0.5 * (kth + nxt) if nxt < kth else kth
    else:
        q = kth - 1.0
    w = logp - q
    if k0 < n and logp[order[k0]] == kth:
        tail = order[k0:]
        tied = tail[logp[tail] == kth]
        w[tied] = -np.finfo(float).eps
    full = np.full(land.shape, -np.inf)
    full[sea] = w
    return MaskParams(Field(full, land))


def random_mask_params(init: MaskParams, seed: int) -> MaskParams:
    """Same multiset of sea-cell logits as ``init``, randomly permuted over sea cells.

    Used as the uniform-random initialization with an identical budget.
    """
    rng = np.random.default_rng(seed)
    land = init.land
    w = init.sea_vector()
    full = np.full(land.shape, -np.inf)
    full[~land] = rng.permutation(w)
    return MaskParams(Field(full, land))
