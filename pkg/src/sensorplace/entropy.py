"""Information-entropy fields from historical data.

Two estimators are provided. The per-pixel one treats each cell as an
independent Gaussian. The patch one fits a Gaussian density to L x L patches
pooled around lattice points ("bins"), factorized autoregressively along a
pixel ordering through the Cholesky factor of the shrunk covariance. Row i of
the Cholesky factor is the i-th conditional of the chain rule, so truncating
to the first L'^2 rows of a spiral ordering gives the entropy of the central
L' x L' sub-square from the same fit.

All entropies are reported in nats per grid cell.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, ndimage

from .errors import InsufficientData, InvalidArgument, NumericError
from .fields import (
    ORDERINGS,
    Field,
    FieldSeries,
    Ordering,
    PatchSet,
    boxcar_smooth,
    extract_patches,
    make_ordering,
    valid_windows,
)

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)
HALF_LOG_2PIE = 0.5 * (1.0 + np.log(2 * np.pi))

ESTIMATORS = ("held-in", "closed-form", "monte-carlo")


@dataclass(frozen=True)
class EntropyConfig:
    patch_size: int = 8
    scale: int = 8
    ordering: str = "spiral"
    patch_stride: int = 4
    bin_stride: int = 4
    min_samples: int = 0          # 0 -> patch_size**2 + 1
    shrinkage: float = 1e-3       # relative to the mean covariance diagonal
    shrinkage_floor: float = 1e-10
    ensemble: int = 8
    bootstrap: bool = True
    mc_samples: int = 1000
    estimator: str = "held-in"
    smooth_window: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1:
            raise InvalidArgument("patch_size must be >= 1")
        if not 1 <= self.scale <= self.patch_size:
            raise InvalidArgument(f"scale must lie in 1..{self.patch_size}, got {self.scale}")
        if self.patch_stride < 1 or self.bin_stride < 1:
            raise InvalidArgument("strides must be >= 1")
        if self.ensemble < 1:
            raise InvalidArgument("ensemble must be >= 1")
        if self.mc_samples < 1:
            raise InvalidArgument("mc_samples must be >= 1")
        if self.shrinkage < 0 or self.shrinkage_floor <= 0:
            raise InvalidArgument("shrinkage must be >= 0 and shrinkage_floor > 0")
        if self.ordering not in ORDERINGS:
            raise InvalidArgument(f"ordering must be one of {sorted(ORDERINGS)}")
        if self.estimator not in ESTIMATORS:
            raise InvalidArgument(f"estimator must be one of {ESTIMATORS}")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise InvalidArgument("smooth_window must be odd and >= 1")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples or self.patch_size ** 2 + 1


# --------------------------------------------------------------------------
# per-pixel Gaussian


@dataclass(frozen=True, eq=False)
class PixelStats:
    mu: Field
    sigma: Field


@dataclass(frozen=True, eq=False)
class EntropyField:
    """Entropy map in nats/cell. Cells outside ``valid`` are flagged."""

    H: Field
    valid: np.ndarray
    scale: int
    ensemble_size: int
    bin_centers: np.ndarray | None = None
    bin_values: np.ndarray | None = None

    @property
    def land(self) -> np.ndarray:
        return self.H.land


def fit_pixel_gaussian(train: FieldSeries) -> PixelStats:
    if len(train) < 2:
        raise InsufficientData(f"need at least 2 time steps, got {len(train)}")
    mu = train.values.mean(axis=0)
    sigma = train.values.std(axis=0, ddof=1)
    return PixelStats(Field(mu, train.land), Field(sigma, train.land))


def pixel_entropy(stats: PixelStats) -> EntropyField:
    """H = ln(sigma) + (1 + ln 2 pi)/2 per sea cell; sigma = 0 gives a flagged -inf."""
    sigma = stats.sigma.values
    sea = stats.sigma.sea
    H = np.full(sigma.shape, np.nan)
    pos = sea & (sigma > 0)
    H[pos] = np.log(sigma[pos]) + HALF_LOG_2PIE
    H[sea & (sigma <= 0)] = -np.inf
    return EntropyField(Field(H, stats.sigma.land), pos, scale=1, ensemble_size=1)


# --------------------------------------------------------------------------
# patch model


@dataclass(frozen=True, eq=False)
class PatchBin:
    center: tuple[int, int]
    count: int
    mean: np.ndarray
    chol: np.ndarray     # lower Cholesky factor of cov + shrinkage * I
    shrinkage: float
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def covariance(self) -> np.ndarray:
        """The unshrunk maximum-likelihood covariance."""
        return self.chol @ self.chol.T - self.shrinkage * np.eye(self.dim)


@dataclass(frozen=True, eq=False)
class PatchModel:
    ordering: Ordering
    bins: list[PatchBin]
    dropped: list[tuple[int, int]] = field(default_factory=list)

    @property
    def patch_size(self) -> int:
        return self.ordering.size

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins], dtype=np.int64).reshape(-1, 2)


def bin_membership(patches: PatchSet, bin_stride: int) -> dict[tuple[int, int], np.ndarray]:
    """Map each bin center to the row indices of its pooled patches.

    Bin centers are the patch centers lying on the lattice
    L//2 + k * bin_stride. A patch belongs to every bin whose center is within
    Chebyshev distance ``bin_stride`` of its own center, so bins overlap.
    """
    if len(patches) == 0:
        return {}
    L = patches.patch_size
    uniq, inverse = np.unique(patches.centers, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    rows_by_center = [np.flatnonzero(inverse == k) for k in range(len(uniq))]
    on_lattice = ((uniq - L // 2) % bin_stride == 0).all(axis=1)
    out = {}
    for b in uniq[on_lattice]:
        near = np.flatnonzero(np.abs(uniq - b).max(axis=1) <= bin_stride)
        out[(int(b[0]), int(b[1]))] = np.sort(np.concatenate([rows_by_center[k] for k in near]))
    return out


def fit_gaussian_bin(X: np.ndarray, center, shrinkage: float, floor: float,
                     weights: np.ndarray | None = None) -> PatchBin:
    """Maximum-likelihood Gaussian with diagonal shrinkage for samples X (n, d)."""
    n, d = X.shape
    if weights is None:
        weights = np.ones(n)
    wsum = weights.sum()
    mean = weights @ X / wsum
    Xc = X - mean
    cov = (Xc * weights[:, None]).T @ Xc / wsum
    cov = 0.5 * (cov + cov.T)
    mean_diag = float(np.trace(cov)) / d
    delta = max(shrinkage * mean_diag, floor)
    try:
        chol = np.linalg.cholesky(cov + delta * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky failed for bin {tuple(center)} after shrinkage {delta:g}") from exc
    return PatchBin(tuple(int(v) for v in center), n, mean, chol, delta, degenerate=mean_diag <= 0.0)


def fit_patch_model(patches: PatchSet, config: EntropyConfig, resample_seed: int | None = None) -> PatchModel:
    """Fit one Gaussian per bin; with ``resample_seed`` each bin is bootstrap-resampled."""
    if patches.patch_size != config.patch_size:
        raise InvalidArgument(f"patches have side {patches.patch_size}, config expects {config.patch_size}")
    members = bin_membership(patches, config.bin_stride)
    min_samples = config.effective_min_samples
    bins, dropped = [], []
    for k, (center, rows) in enumerate(sorted(members.items())):
        if len(rows) < min_samples:
            dropped.append(center)
            continue
        weights = None
        if resample_seed is not None:
            rng = np.random.default_rng([resample_seed, k])
            weights = rng.multinomial(len(rows), np.full(len(rows), 1.0 / len(rows))).astype(np.float64)
        bins.append(fit_gaussian_bin(patches.patches[rows], center, config.shrinkage,
                                     config.shrinkage_floor, weights))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} bins with fewer than {min_samples} samples", RuntimeWarning)
    return PatchModel(patches.ordering, bins, dropped)


def _resolve_bin(model: PatchModel, b) -> PatchBin:
    return b if isinstance(b, PatchBin) else model.bins[b]


def _prefix_dim(model: PatchModel, scale: int | None) -> int:
    L = model.patch_size
    if scale is None:
        return L * L
    if not 1 <= scale <= L:
        raise InvalidArgument(f"scale must lie in 1..{L}, got {scale}")
    return scale * scale


def conditional_nlls(model: PatchModel, b, patch: np.ndarray, scale: int | None = None) -> np.ndarray:
    """Per-pixel conditional negative log-likelihoods, in ordering order.

    Entry i is -ln p(x_i | x_1..x_{i-1}); the conditional mean residual is
    z_i * chol_ii with z = chol^{-1} (x - mean).
    """
    pb = _resolve_bin(model, b)
    d = _prefix_dim(model, scale)
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape[-1] not in (d, pb.dim):
        raise InvalidArgument(f"patch length {patch.shape[-1]} does not match dimension {pb.dim}")
    x = patch[..., :d] - pb.mean[:d]
    Ld = pb.chol[:d, :d]
    z = linalg.solve_triangular(Ld, x.reshape(-1, d).T, lower=True).T.reshape(x.shape)
    return HALF_LOG_2PI + np.log(np.diag(Ld)) + 0.5 * z ** 2


def patch_nll(model: PatchModel, b, patch: np.ndarray, scale: int | None = None) -> np.ndarray | float:
    """Joint NLL (nats, per patch) of the leading scale^2 pixels."""
    out = conditional_nlls(model, b, patch, scale).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def entropy_closed_form(model: PatchModel, b, scale: int) -> float:
    """Per-cell Gaussian entropy of the leading scale^2 x scale^2 block."""
    pb = _resolve_bin(model, b)
    d = _prefix_dim(model, scale)
    return float(HALF_LOG_2PIE + np.log(np.diag(pb.chol)[:d]).sum() / d)


def entropy_held_in(model: PatchModel, b, scale: int) -> float:
    """Per-cell average NLL of the bin's own (possibly resampled) training patches.

    For the shrunk MLE this equals the closed form minus
    shrinkage * tr(Sigma_d^{-1}) / (2 d), so no patches are needed.
    """
    pb = _resolve_bin(model, b)
    d = _prefix_dim(model, scale)
    inv = linalg.solve_triangular(pb.chol[:d, :d], np.eye(d), lower=True)
    return entropy_closed_form(model, pb, scale) - 0.5 * pb.shrinkage * float((inv ** 2).sum()) / d


def entropy_monte_carlo(model: PatchModel, b, scale: int, n: int, seed, with_stderr: bool = False):
    """Monte-Carlo entropy: mean NLL of n samples drawn from the bin's prefix Gaussian."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    pb = _resolve_bin(model, b)
    d = _prefix_dim(model, scale)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, d))
    samples = pb.mean[:d] + z @ pb.chol[:d, :d].T
    nll = patch_nll(model, pb, samples, scale) / d
    nll = np.atleast_1d(nll)
    est = float(nll.mean())
    if with_stderr:
        se = float(nll.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return est, se
    return est


# --------------------------------------------------------------------------
# entropy field


def _bin_value(model: PatchModel, pb: PatchBin, config: EntropyConfig, seed) -> float:
    if config.estimator == "closed-form":
        return entropy_closed_form(model, pb, config.scale)
    if config.estimator == "monte-carlo":
        return entropy_monte_carlo(model, pb, config.scale, config.mc_samples, seed)
    return entropy_held_in(model, pb, config.scale)


def ensemble_bin_entropy(patches: PatchSet, config: EntropyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-averaged per-bin entropy. Returns (centers (K, 2), values (K,)).

    Members are bootstrap refits (or identical refits with bootstrap off);
    aggregation runs in bin order, then member order.
    """
    seeds = np.random.SeedSequence(config.seed).generate_state(config.ensemble, dtype=np.uint64)
    sums: dict[tuple[int, int], float] = {}
    for member in range(config.ensemble):
        rs = int(seeds[member]) if config.bootstrap else None
        with warnings.catch_warnings():
            if member > 0:
                warnings.simplefilter("ignore", RuntimeWarning)
            model = fit_patch_model(patches, config, resample_seed=rs)
        for k, pb in enumerate(model.bins):
            if pb.degenerate:
                continue
            v = _bin_value(model, pb, config, [config.seed, member, k])
            sums[pb.center] = sums.get(pb.center, 0.0) + v
    centers = sorted(sums)
    vals = np.array([sums[c] / config.ensemble for c in centers])
    return np.array(centers, dtype=np.int64).reshape(-1, 2), vals


def coverage_mask(land: np.ndarray, L: int, stride: int) -> np.ndarray:
    covered = np.zeros(land.shape, dtype=bool)
    for r, c in valid_windows(land, L, stride):
        covered[r:r + L, c:c + L] = True
    return covered & ~land


def splat_bins(shape, centers: np.ndarray, values: np.ndarray, covered: np.ndarray) -> np.ndarray:
    """Bilinear spread of lattice bin values onto the covered cells.

    Lattice nodes without a bin take the value of the nearest node that has
    one; cells beyond the outermost nodes take the edge value.
    """
    rows_u = np.unique(centers[:, 0])
    cols_u = np.unique(centers[:, 1])
    lattice = np.full((len(rows_u), len(cols_u)), np.nan)
    lattice[np.searchsorted(rows_u, centers[:, 0]), np.searchsorted(cols_u, centers[:, 1])] = values
    missing = np.isnan(lattice)
    if missing.any():
        _, (ir, ic) = ndimage.distance_transform_edt(missing, return_indices=True)
        lattice = lattice[ir, ic]

    def axis_weights(nodes, n):
        x = np.arange(n, dtype=np.float64)
        if len(nodes) == 1:
            return np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n)
        hi = np.clip(np.searchsorted(nodes, x, side="right"), 1, len(nodes) - 1)
        lo = hi - 1
        t = np.clip((x - nodes[lo]) / (nodes[hi] - nodes[lo]), 0.0, 1.0)
        return lo, hi, t

    r0, r1, tr = axis_weights(rows_u, shape[0])
    c0, c1, tc = axis_weights(cols_u, shape[1])
    top = lattice[r0][:, c0] * (1 - tc) + lattice[r0][:, c1] * tc
    bot = lattice[r1][:, c0] * (1 - tc) + lattice[r1][:, c1] * tc
    grid = top * (1 - tr)[:, None] + bot * tr[:, None]
    return np.where(covered, grid, np.nan)


def entropy_field(train: FieldSeries, config: EntropyConfig) -> EntropyField:
    L = config.patch_size
    ordering = make_ordering(config.ordering, L)
    patches = extract_patches(train, L, config.patch_stride, ordering)
    if patches.empty:
        raise InsufficientData("no all-sea patch windows in the grid")
    centers, vals = ensemble_bin_entropy(patches, config)
    if len(vals) == 0:
        raise InsufficientData("no usable bins: all dropped or degenerate")
    covered = coverage_mask(train.land, L, config.patch_stride)
    H = Field(splat_bins(train.land.shape, centers, vals, covered), train.land)
    H = boxcar_smooth(H, config.smooth_window, valid=covered)
    return EntropyField(H, covered, config.scale, config.ensemble, centers, vals)
