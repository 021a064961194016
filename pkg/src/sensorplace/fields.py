"""Grid containers, patch orderings, patch extraction and land-aware smoothing.

Land cells carry a non-finite sentinel and are excluded from all statistics.
Arrays held by the containers are marked read-only after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument

DAYS_PER_YEAR = 365


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgument(f"grid shape must be positive, got {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def as_tuple(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True, eq=False)
class Field:
    """A single 2-D grid with a land mask (True = land).

    Land cells hold a non-finite sentinel: NaN unless the caller supplies
    another non-finite value (mask logits use -inf).
    """

    values: np.ndarray
    land: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        land = np.array(self.land, dtype=bool)
        if values.ndim != 2 or values.shape != land.shape:
            raise InvalidArgument(f"values {values.shape} and land {land.shape} must be equal 2-D shapes")
        values[land & np.isfinite(values)] = np.nan
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "land", _frozen(land))

    @property
    def shape(self) -> GridShape:
        return GridShape(*self.values.shape)

    @property
    def sea(self) -> np.ndarray:
        return ~self.land

    def sea_values(self) -> np.ndarray:
        return self.values[~self.land]

    @classmethod
    def from_sea_vector(cls, vec: np.ndarray, land: np.ndarray) -> "Field":
        values = np.full(land.shape, np.nan)
        values[~land] = vec
        return cls(values, land)


def _stamp_ordinal(stamps: np.ndarray) -> np.ndarray:
    return stamps[:, 0].astype(np.int64) * DAYS_PER_YEAR + stamps[:, 1]


@dataclass(frozen=True, eq=False)
class FieldSeries:
    """Time-ordered stack of fields sharing one land mask.

    ``values`` has shape (T, rows, cols); ``stamps`` is (T, 2) with columns
    (year, day_of_year) on a 365-day calendar.
    """

    values: np.ndarray
    land: np.ndarray
    stamps: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        land = np.array(self.land, dtype=bool)
        stamps = np.array(self.stamps, dtype=np.int64).reshape(-1, 2)
        if values.ndim != 3 or values.shape[1:] != land.shape:
            raise InvalidArgument(f"values {values.shape} incompatible with land {land.shape}")
        if len(stamps) != len(values):
            raise InvalidArgument(f"{len(stamps)} stamps for {len(values)} fields")
        if len(stamps) and ((stamps[:, 1] < 1) | (stamps[:, 1] > DAYS_PER_YEAR)).any():
            raise InvalidArgument("day_of_year must lie in 1..365")
        if (np.diff(_stamp_ordinal(stamps)) <= 0).any():
            raise InvalidArgument("stamps must be strictly increasing")
        values[:, land] = np.nan
        if not np.isfinite(values[:, ~land]).all():
            raise InvalidArgument("non-finite value on a sea cell")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "land", _frozen(land))
        object.__setattr__(self, "stamps", _frozen(stamps))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return FieldSeries(self.values[idx], self.land, self.stamps[idx])
        return Field(self.values[idx], self.land)

    def __iter__(self) -> Iterator[Field]:
        for t in range(len(self)):
            yield self[t]

    @property
    def fields(self) -> list[Field]:
        return list(self)

    @property
    def shape(self) -> GridShape:
        return GridShape(*self.land.shape)

    @property
    def n_sea(self) -> int:
        return int((~self.land).sum())

    @property
    def years(self) -> np.ndarray:
        return self.stamps[:, 0]

    @property
    def days(self) -> np.ndarray:
        return self.stamps[:, 1]

    def sea_matrix(self) -> np.ndarray:
        """(T, n_sea) matrix of sea-cell values in row-major cell order."""
        return self.values[:, ~self.land]

    @classmethod
    def from_fields(cls, fields: Sequence[Field], stamps) -> "FieldSeries":
        if not fields:
            raise InvalidArgument("empty field list")
        land = fields[0].land
        for f in fields:
            if not np.array_equal(f.land, land):
                raise InvalidArgument("fields must share one land mask")
        return cls(np.stack([f.values for f in fields]), land, stamps)

    @classmethod
    def from_sea_matrix(cls, mat: np.ndarray, land: np.ndarray, stamps) -> "FieldSeries":
        values = np.full((len(mat),) + land.shape, np.nan)
        values[:, ~land] = mat
        return cls(values, land, stamps)


# --------------------------------------------------------------------------
# orderings


@dataclass(frozen=True, eq=False)
class Ordering:
    """Permutation of the cells of an L x L patch; ``sequence`` is (L*L, 2)."""

    size: int
    sequence: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        seq = np.array(self.sequence, dtype=np.int64).reshape(-1, 2)
        L = self.size
        if L < 1:
            raise InvalidArgument(f"patch side must be >= 1, got {L}")
        flat = seq[:, 0] * L + seq[:, 1]
        ok = (
            len(seq) == L * L
            and ((seq >= 0) & (seq < L)).all()
            and np.array_equal(np.sort(flat), np.arange(L * L))
        )
        if not ok:
            raise InvalidArgument("ordering is not a bijection onto the L x L grid")
        object.__setattr__(self, "sequence", _frozen(seq))

    @property
    def flat_index(self) -> np.ndarray:
        """Row-major flat index of each position in the ordering."""
        return self.sequence[:, 0] * self.size + self.sequence[:, 1]

    def cells(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r, c in self.sequence]

    def serialize(self, patch: np.ndarray) -> np.ndarray:
        """Map (..., L, L) patches to (..., L*L) vectors in this ordering."""
        patch = np.asarray(patch)
        return patch.reshape(patch.shape[:-2] + (-1,))[..., self.flat_index]

    def deserialize(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        out = np.empty(vec.shape[:-1] + (self.size * self.size,), dtype=vec.dtype)
        out[..., self.flat_index] = vec
        return out.reshape(vec.shape[:-1] + (self.size, self.size))


def _check_side(L: int):
    if int(L) != L or L < 1:
        raise InvalidArgument(f"patch side must be a positive integer, got {L}")


def raster_ordering(L: int) -> Ordering:
    _check_side(L)
    rr, cc = np.divmod(np.arange(L * L), L)
    return Ordering(L, np.column_stack([rr, cc]), "raster")


def s_curve_ordering(L: int) -> Ordering:
    _check_side(L)
    rr, cc = np.divmod(np.arange(L * L), L)
    cc = np.where(rr % 2 == 1, L - 1 - cc, cc)
    return Ordering(L, np.column_stack([rr, cc]), "s-curve")


def spiral_ordering(L: int) -> Ordering:
    """Clockwise spiral from the cell (ceil(L/2)-1, ceil(L/2)-1).

    The unbounded walk goes right, down, left, up with run lengths
    1, 1, 2, 2, 3, 3, ...; out-of-bounds positions are skipped. For every
    k <= L the first k*k cells form a k x k sub-square.
    """
    _check_side(L)
    a = -(-L // 2) - 1
    r = c = a
    out = [(r, c)]
    steps = ((0, 1), (1, 0), (0, -1), (-1, 0))
    run, turn = 1, 0
    while len(out) < L * L:
        for _ in range(2):
            dr, dc = steps[turn % 4]
            for _ in range(run):
                r += dr
                c += dc
                if 0 <= r < L and 0 <= c < L:
                    out.append((r, c))
            turn += 1
        run += 1
    return Ordering(L, np.array(out[: L * L]), "spiral")


ORDERINGS = {
    "raster": raster_ordering,
    "s-curve": s_curve_ordering,
    "spiral": spiral_ordering,
}


def make_ordering(name: str, L: int) -> Ordering:
    try:
        return ORDERINGS[name](L)
    except KeyError:
        raise InvalidArgument(f"unknown ordering {name!r}; choose from {sorted(ORDERINGS)}") from None


# --------------------------------------------------------------------------
# patches


@dataclass(frozen=True, eq=False)
class PatchSet:
    patch_size: int
    centers: np.ndarray     # (N, 2) grid coordinates of patch centers
    patches: np.ndarray     # (N, L*L) serialized in ``ordering``
    time_index: np.ndarray  # (N,)
    ordering: Ordering
    empty: bool = False

    def __len__(self) -> int:
        return len(self.patches)


def valid_windows(land: np.ndarray, L: int, stride: int) -> np.ndarray:
    """Top-left corners (K, 2) of all-sea L x L windows on the stride lattice, row-major."""
    rows, cols = land.shape
    corners = [
        (r, c)
        for r in range(0, rows - L + 1, stride)
        for c in range(0, cols - L + 1, stride)
        if not land[r:r + L, c:c + L].any()
    ]
    return np.array(corners, dtype=np.int64).reshape(-1, 2)


def extract_patches(series: FieldSeries, L: int, stride: int, ordering: Ordering) -> PatchSet:
    """All fully-sea L x L windows on the stride lattice, one patch per time step per window.

    Traversal is time-major, then row-major over windows. A window whose
    top-left corner is (r, c) has center (r + L//2, c + L//2).
    """
    rows, cols = series.shape.as_tuple()
    if L < 1 or L > min(rows, cols):
        raise InvalidArgument(f"patch side {L} does not fit a {rows}x{cols} grid")
    if stride < 1:
        raise InvalidArgument(f"stride must be >= 1, got {stride}")
    if ordering.size != L:
        raise InvalidArgument(f"ordering is for side {ordering.size}, patches have side {L}")
    corners = valid_windows(series.land, L, stride)
    T, K = len(series), len(corners)
    if K == 0:
        return PatchSet(L, np.zeros((0, 2), np.int64), np.zeros((0, L * L)), np.zeros(0, np.int64), ordering, True)
    offs = np.arange(L)
    ri = corners[:, 0, None, None] + offs[None, :, None]
    ci = corners[:, 1, None, None] + offs[None, None, :]
    windows = series.values[:, ri, ci]  # (T, K, L, L)
    patches = ordering.serialize(windows).reshape(T * K, L * L)
    centers = np.tile(corners + L // 2, (T, 1))
    time_index = np.repeat(np.arange(T), K)
    return PatchSet(L, centers, patches, time_index, ordering)


# --------------------------------------------------------------------------
# smoothing


def boxcar_smooth(fld: Field, window: int, valid: np.ndarray | None = None) -> Field:
    """Mean over the window x window neighbourhood, excluding land (and ~valid) cells.

    Cells outside ``valid`` keep their values. The neighbourhood is truncated
    at the grid edge.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidArgument(f"smoothing window must be odd and >= 1, got {window}")
    use = fld.sea if valid is None else (fld.sea & valid)
    if window == 1:
        return fld
    x = np.where(use, fld.values, 0.0)
    w = use.astype(np.float64)
    num = ndimage.uniform_filter(x, size=window, mode="constant", cval=0.0)
    den = ndimage.uniform_filter(w, size=window, mode="constant", cval=0.0)
    out = fld.values.copy()
    out[use] = num[use] / den[use]
    return Field(out, fld.land)
