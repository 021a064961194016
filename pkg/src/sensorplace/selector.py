"""Joint optimization of a binary sensor mask and a reconstruction decoder.

The mask is step(w) with step(0) = 1. Its gradient is passed straight
through to w. A concrete (Gumbel-softmax) selector with k heads is the
alternative. The decoder is an affine map on the masked, standardized
field, optionally with one tanh hidden layer. All gradients are analytic.

Vectors over the grid are sea-cell vectors in row-major order.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericError
from .fields import Field, FieldSeries
from .io import read_checkpoint, write_checkpoint
from .prior import MaskParams

SELECTORS = ("straight_through", "concrete")
DECODERS = ("linear", "mlp1")


@dataclass(frozen=True)
class TrainConfig:
    lambda_max: float = 0.05
    lambda_ramp_epochs: int = 20
    epochs: int = 40
    batch_size: int = 32
    step_size: float = 1e-3
    lr_decay: float = 0.99
    seed: int = 0
    selector: str = "straight_through"
    k: int = 0                 # concrete heads; 0 -> number of cells on in the init mask
    t_start: float = 10.0
    t_end: float = 0.1
    decoder: str = "linear"
    hidden_width: int = 32
    train_mask: bool = True

    def __post_init__(self):
        if self.lambda_max < 0:
            raise InvalidArgument("lambda_max must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs and batch_size must be >= 1")
        if self.lambda_ramp_epochs < 0:
            raise InvalidArgument("lambda_ramp_epochs must be >= 0")
        if not self.step_size > 0:
            raise InvalidArgument("step_size must be positive")
        if self.selector not in SELECTORS:
            raise InvalidArgument(f"selector must be one of {SELECTORS}")
        if self.decoder not in DECODERS:
            raise InvalidArgument(f"decoder must be one of {DECODERS}")
        if self.selector == "concrete" and not 0 < self.t_end <= self.t_start:
            raise InvalidArgument("concrete temperatures need 0 < t_end <= t_start")

    def sparsity_weight(self, epoch: int) -> float:
        """Linear ramp from 0 at epoch 0 to lambda_max at lambda_ramp_epochs."""
        if self.lambda_ramp_epochs == 0:
            return self.lambda_max
        return self.lambda_max * min(1.0, epoch / self.lambda_ramp_epochs)

    def temperature(self, epoch: int) -> float:
        if self.epochs == 1:
            return self.t_end
        frac = epoch / (self.epochs - 1)
        return self.t_start * (self.t_end / self.t_start) ** frac


@dataclass(eq=False)
class Decoder:
    """Reconstruction operator plus the train-split standardization it expects.

    linear: y = u W + b;  mlp1: y = tanh(u W + b) W2 + b2, with u = x * mask.
    """

    kind: str
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    land: np.ndarray
    W2: np.ndarray | None = None
    b2: np.ndarray | None = None

    @property
    def n_sea(self) -> int:
        return len(self.mean)

    @property
    def hidden_width(self) -> int | None:
        return self.W.shape[1] if self.kind == "mlp1" else None

    def params(self) -> dict[str, np.ndarray]:
        if self.kind == "linear":
            return {"W": self.W, "b": self.b}
        return {"W": self.W, "b": self.b, "W2": self.W2, "b2": self.b2}

    def standardize(self, X: np.ndarray) -> np.ndarray:
        safe = np.where(self.std > 0, self.std, 1.0)
        return np.where(self.std > 0, (X - self.mean) / safe, 0.0)

    def destandardize(self, Z: np.ndarray) -> np.ndarray:
        return np.where(self.std > 0, Z * self.std + self.mean, self.mean)

    @property
    def loss_weights(self) -> np.ndarray:
        return (self.std > 0).astype(np.float64)


@dataclass(eq=False)
class TrainReport:
    history: list[dict] = field(default_factory=list)
    mask: np.ndarray | None = None        # binary grid
    params: MaskParams | None = None
    decoder: Decoder | None = None
    selected: list[int] | None = None     # concrete: sea indices of the k sensors
    wall_time: float = 0.0

    @property
    def sensor_count(self) -> int:
        return int(self.mask.sum())

    def epochs_to(self, threshold: float) -> float:
        """First logged epoch whose MSE term is <= threshold (inf if never)."""
        for rec in self.history:
            if rec["mse"] <= threshold:
                return rec["epoch"]
        return float("inf")


# --------------------------------------------------------------------------
# selection primitives


def step_mask(w: MaskParams | np.ndarray) -> np.ndarray:
    """1 where w >= 0, else 0. Non-finite (land) entries give 0."""
    vals = w.w.values if isinstance(w, MaskParams) else np.asarray(w, dtype=np.float64)
    return (np.isfinite(vals) & (vals >= 0)).astype(np.float64)


def straight_through_grad(upstream: np.ndarray, land: np.ndarray | None = None) -> np.ndarray:
    """Identity backward pass for the step function; land cells get zero gradient."""
    g = np.array(upstream, dtype=np.float64)
    if land is not None:
        if g.shape != np.shape(land):
            raise InvalidArgument(f"gradient {g.shape} and land {np.shape(land)} differ")
        g[np.asarray(land, bool)] = 0.0
    return g


def concrete_select(logits: np.ndarray, T: float, gumbel_noise: np.ndarray) -> np.ndarray:
    """Per-head softmax((logits + noise) / T); logits and noise are (k, n)."""
    if not T > 0:
        raise InvalidArgument(f"temperature must be positive, got {T}")
    a = (np.asarray(logits) + np.asarray(gumbel_noise)) / T
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def concrete_hard(weights: np.ndarray) -> np.ndarray:
    """Distinct argmax cells per head; a head whose argmax is taken falls back
    to its next-highest weight. Heads are resolved in order of their peak weight."""
    k, n = weights.shape
    if k > n:
        raise InvalidArgument(f"{k} heads cannot select distinct cells among {n}")
    taken = np.zeros(n, bool)
    chosen = np.empty(k, np.int64)
    for h in np.argsort(-weights.max(axis=1), kind="stable"):
        for j in np.argsort(-weights[h], kind="stable"):
            if not taken[j]:
                taken[j] = True
                chosen[h] = j
                break
    return chosen


# --------------------------------------------------------------------------
# loss and analytic gradients


def loss_and_grads(params: dict, kind: str, X: np.ndarray, mask: np.ndarray,
                   weights: np.ndarray, lam: float, n_mask: int | None = None,
                   Y: np.ndarray | None = None):
    """Loss and gradients for the decoder on masked input X * mask.

    X: (B, n_in) standardized inputs; Y: (B, n_out) targets (defaults to X);
    weights: (n_out,) 0/1 loss weights; lam: sparsity weight. The sparsity
    term is lam * sum(mask) / n_mask (n_mask defaults to len(mask)).

    Returns (total, mse, sparsity, grads) with grads for every parameter and
    for the mask itself under key "mask".
    """
    Y = X if Y is None else Y
    B = len(X)
    n_mask = len(mask) if n_mask is None else n_mask
    n_valid = max(float(weights.sum()), 1.0)
    U = X * mask
    if kind == "linear":
        out = U @ params["W"] + params["b"]
    else:
        Hd = np.tanh(U @ params["W"] + params["b"])
        out = Hd @ params["W2"] + params["b2"]
    R = (out - Y) * weights
    mse = float((R ** 2).sum() / (B * n_valid))
    sparsity = lam * float(mask.sum()) / n_mask
    G = 2.0 * R / (B * n_valid)
    grads = {}
    if kind == "linear":
        grads["W"] = U.T @ G
        grads["b"] = G.sum(axis=0)
        dU = G @ params["W"].T
    else:
        grads["W2"] = Hd.T @ G
        grads["b2"] = G.sum(axis=0)
        dA = (G @ params["W2"].T) * (1.0 - Hd ** 2)
        grads["W"] = U.T @ dA
        grads["b"] = dA.sum(axis=0)
        dU = dA @ params["W"].T
    grads["mask"] = (dU * X).sum(axis=0) + lam / n_mask
    return mse + sparsity, mse, sparsity, grads


def loss(decoder: Decoder, mask, batch, lam: float = 0.0) -> tuple[float, float, float]:
    """(total, mse_term, sparsity_term) on a batch.

    ``batch`` is a FieldSeries in physical units or a (B, n_sea) standardized
    matrix; ``mask`` is a binary grid or a sea vector.
    """
    X = decoder.standardize(batch.sea_matrix()) if isinstance(batch, FieldSeries) else np.asarray(batch)
    if len(X) == 0:
        raise InvalidArgument("empty batch")
    m = _mask_vector(decoder, mask)
    total, mse, sp, _ = loss_and_grads(decoder.params(), decoder.kind, X, m, decoder.loss_weights, lam)
    return total, mse, sp


def _mask_vector(decoder: Decoder, mask) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.shape == decoder.land.shape:
        m = m[~decoder.land]
    if m.shape != (decoder.n_sea,):
        raise InvalidArgument(f"mask shape {np.shape(mask)} does not match decoder with {decoder.n_sea} sea cells")
    return m


# --------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] *= self.beta1
            self.m[k] += (1 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# --------------------------------------------------------------------------
# training


def standardization(train: FieldSeries) -> tuple[np.ndarray, np.ndarray]:
    X = train.sea_matrix()
    return X.mean(axis=0), X.std(axis=0)


def _init_decoder(kind, n_in_rows, n_out, hidden, rng):
    if kind == "linear":
        return {"W": np.zeros((n_in_rows, n_out)), "b": np.zeros(n_out)}
    return {
        "W": rng.standard_normal((n_in_rows, hidden)) / np.sqrt(max(n_in_rows, 1)),
        "b": np.zeros(hidden),
        "W2": rng.standard_normal((hidden, n_out)) / np.sqrt(hidden),
        "b2": np.zeros(n_out),
    }


def _check_finite(value: float, epoch: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss at epoch {epoch}; lower step_size or lambda_max")


def train(train_series: FieldSeries, init: MaskParams, config: TrainConfig) -> TrainReport:
    """Fit mask logits and decoder on a raw (physical-unit) training series.

    Standardization statistics are computed here from ``train_series`` and
    stored in the returned decoder.
    """
    if len(train_series) == 0:
        raise InvalidArgument("empty training set")
    if not np.array_equal(init.land, train_series.land):
        raise InvalidArgument("mask parameters and series have different land masks")
    if config.selector == "concrete":
        return _train_concrete(train_series, init, config)
    return _train_straight_through(train_series, init, config)


def _train_straight_through(series: FieldSeries, init: MaskParams, config: TrainConfig) -> TrainReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    mean, std = standardization(series)
    X = np.where(std > 0, (series.sea_matrix() - mean) / np.where(std > 0, std, 1.0), 0.0)
    weights = (std > 0).astype(np.float64)
    T, n = X.shape
    w = init.sea_vector().astype(np.float64).copy()
    if not np.isfinite(w).all():
        raise InvalidArgument("mask logits must be finite on sea cells")

    if config.decoder == "linear":
        # rows of W stay zero for inputs never switched on: their mask gradient
        # is exactly zero, so only the initially-active rows are carried
        rows = np.flatnonzero(w >= 0)
    else:
        rows = np.arange(n)
    params = _init_decoder(config.decoder, len(rows), n, config.hidden_width, rng)
    params["w"] = w[rows].copy()
    opt = Adam(params, config.step_size)
    report = TrainReport()
    lam = config.sparsity_weight(0)

    def log(epoch, lam):
        m = (params["w"] >= 0).astype(np.float64)
        dec_params = {k: v for k, v in params.items() if k != "w"}
        _, mse, _, _ = loss_and_grads(dec_params, config.decoder, X[:, rows], m, weights, lam,
                                      n_mask=n, Y=X)
        count = int(m.sum())
        _check_finite(mse, epoch)
        report.history.append({"epoch": epoch, "mse": mse, "sparsity": lam * count / n, "sensors": count})

    log(0, lam)
    for epoch in range(1, config.epochs + 1):
        lam = config.sparsity_weight(epoch - 1)
        order = rng.permutation(T)
        for s in range(0, T, config.batch_size):
            idx = order[s:s + config.batch_size]
            m = (params["w"] >= 0).astype(np.float64)
            dec_params = {k: v for k, v in params.items() if k != "w"}
            Xb = X[idx]
            total, _, _, grads = loss_and_grads(dec_params, config.decoder, Xb[:, rows], m,
                                                weights, lam, n_mask=n, Y=Xb)
            _check_finite(total, epoch)
            grads["w"] = straight_through_grad(grads.pop("mask")) if config.train_mask else np.zeros_like(m)
            opt.step(params, grads)
        opt.lr *= config.lr_decay
        log(epoch, lam)

    # off-row cells only ever see the sparsity gradient, which pushes them down
    w_full = w.copy()
    w_full[rows] = params["w"]
    off = np.setdiff1d(np.arange(n), rows)
    w_full[off] = np.minimum(w_full[off], -np.finfo(float).eps)
    mask_vec = (w_full >= 0).astype(np.float64)
    decoder = _assemble_linear_or_mlp(config, params, rows, n, mean, std, series.land)
    report.params = MaskParams(Field(_to_grid(w_full, series.land, -np.inf), series.land))
    report.mask = _to_grid(mask_vec, series.land, 0.0)
    report.decoder = decoder
    report.wall_time = time.perf_counter() - t0
    return report


def _assemble_linear_or_mlp(config, params, rows, n, mean, std, land) -> Decoder:
    if config.decoder == "linear":
        W = np.zeros((n, n))
        W[rows] = params["W"]
        return Decoder("linear", W, params["b"].copy(), mean, std, land)
    return Decoder("mlp1", params["W"].copy(), params["b"].copy(), mean, std, land,
                   params["W2"].copy(), params["b2"].copy())


def _to_grid(vec: np.ndarray, land: np.ndarray, fill: float) -> np.ndarray:
    grid = np.full(land.shape, fill)
    grid[~land] = vec
    return grid


def _train_concrete(series: FieldSeries, init: MaskParams, config: TrainConfig) -> TrainReport:
    if config.decoder != "linear":
        raise InvalidArgument("the concrete selector supports the linear decoder only")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    mean, std = standardization(series)
    X = np.where(std > 0, (series.sea_matrix() - mean) / np.where(std > 0, std, 1.0), 0.0)
    weights = (std > 0).astype(np.float64)
    T, n = X.shape
    w0 = init.sea_vector()
    k = config.k or int((w0 >= 0).sum())
    if not 1 <= k <= n:
        raise InvalidArgument(f"concrete selector needs 1 <= k <= {n}, got {k}")
    params = {
        "logits": np.tile(w0, (k, 1)),
        "V": np.zeros((k, n)),
        "b": np.zeros(n),
    }
    opt = Adam(params, config.step_size)
    report = TrainReport()

    def hard_eval(epoch):
        chosen = concrete_hard(params["logits"])
        out = X[:, chosen] @ params["V"] + params["b"]
        mse = float((((out - X) * weights) ** 2).sum() / (T * max(weights.sum(), 1.0)))
        _check_finite(mse, epoch)
        lam = config.sparsity_weight(max(epoch - 1, 0))
        report.history.append({"epoch": epoch, "mse": mse, "sparsity": lam * k / n, "sensors": k})
        return chosen

    hard_eval(0)
    for epoch in range(1, config.epochs + 1):
        temp = config.temperature(epoch - 1)
        order = rng.permutation(T)
        for s in range(0, T, config.batch_size):
            idx = order[s:s + config.batch_size]
            Xb = X[idx]
            noise = rng.gumbel(size=(k, n))
            S = concrete_select(params["logits"], temp, noise)
            Z = Xb @ S.T
            R = (Z @ params["V"] + params["b"] - Xb) * weights
            G = 2.0 * R / (len(idx) * max(weights.sum(), 1.0))
            dZ = G @ params["V"].T
            dS = dZ.T @ Xb
            grads = {
                "V": Z.T @ G,
                "b": G.sum(axis=0),
                "logits": S * (dS - (S * dS).sum(axis=1, keepdims=True)) / temp,
            }
            if not config.train_mask:
                grads["logits"] = np.zeros_like(params["logits"])
            opt.step(params, grads)
        opt.lr *= config.lr_decay
        chosen = hard_eval(epoch)

    W = np.zeros((n, n))
    W[chosen] = params["V"]
    mask_vec = np.zeros(n)
    mask_vec[chosen] = 1.0
    decoder = Decoder("linear", W, params["b"].copy(), mean, std, series.land)
    logit_grid = np.where(mask_vec > 0, 1.0, -1.0)
    report.params = MaskParams(Field(_to_grid(logit_grid, series.land, -np.inf), series.land))
    report.mask = _to_grid(mask_vec, series.land, 0.0)
    report.decoder = decoder
    report.selected = [int(j) for j in chosen]
    report.wall_time = time.perf_counter() - t0
    return report


# --------------------------------------------------------------------------
# reconstruction


def reconstruct_matrix(decoder: Decoder, mask, X_phys: np.ndarray) -> np.ndarray:
    """Reconstruct (B, n_sea) physical-unit sea vectors from observed ones."""
    m = _mask_vector(decoder, mask)
    X_phys = np.atleast_2d(X_phys)
    if X_phys.shape[1] != decoder.n_sea:
        raise InvalidArgument(f"observations have {X_phys.shape[1]} cells, decoder expects {decoder.n_sea}")
    # unobserved cells must not leak into the reconstruction
    X = np.where(m > 0, decoder.standardize(np.where(m > 0, X_phys, decoder.mean)), 0.0)
    U = X * m
    if decoder.kind == "linear":
        on = np.flatnonzero(m)
        Z = U[:, on] @ decoder.W[on] + decoder.b
    else:
        Z = np.tanh(U @ decoder.W + decoder.b) @ decoder.W2 + decoder.b2
    return decoder.destandardize(Z)


def reconstruct(decoder: Decoder, mask, observed: Field) -> Field:
    if observed.land.shape != decoder.land.shape or not np.array_equal(observed.land, decoder.land):
        raise InvalidArgument("observed field and decoder have different grids")
    vec = reconstruct_matrix(decoder, mask, observed.sea_values()[None, :])[0]
    return Field.from_sea_vector(vec, decoder.land)


def reconstruct_series(decoder: Decoder, mask, series: FieldSeries) -> FieldSeries:
    rec = reconstruct_matrix(decoder, mask, series.sea_matrix())
    return FieldSeries.from_sea_matrix(rec, series.land, series.stamps)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, report: TrainReport) -> None:
    dec = report.decoder
    sections = {
        "MASK": report.mask,
        "LOGITS": report.params.w.values,
        "LAND": dec.land.astype(np.float64),
        "KIND": np.array([DECODERS.index(dec.kind)], dtype=np.float64),
        "MEAN": dec.mean,
        "STD": dec.std,
    }
    if dec.kind == "linear":
        rows = np.flatnonzero(np.abs(dec.W).sum(axis=1) > 0)
        sections["DEC_ROWS"] = rows.astype(np.float64)
        sections["DEC_W"] = dec.W[rows]
        sections["DEC_B"] = dec.b
    else:
        sections["DEC_W"] = dec.W
        sections["DEC_B"] = dec.b
        sections["DEC_W2"] = dec.W2
        sections["DEC_B2"] = dec.b2
    write_checkpoint(path, sections)


def load_checkpoint(path) -> tuple[Decoder, np.ndarray, MaskParams]:
    s = read_checkpoint(path)
    land = s["LAND"].astype(bool)
    kind = DECODERS[int(s["KIND"][0])]
    if kind == "linear":
        n = len(s["MEAN"])
        W = np.zeros((n, n))
        W[s["DEC_ROWS"].astype(np.int64)] = s["DEC_W"].reshape(-1, n)
        dec = Decoder(kind, W, s["DEC_B"], s["MEAN"], s["STD"], land)
    else:
        dec = Decoder(kind, s["DEC_W"], s["DEC_B"], s["MEAN"], s["STD"], land, s["DEC_W2"], s["DEC_B2"])
    return dec, s["MASK"], MaskParams(Field(s["LOGITS"], land))


def write_report_csv(path, report: TrainReport) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mse,sparsity,sensors\n")
        for rec in report.history:
            fh.write(f"{rec['epoch']},{rec['mse']:.10g},{rec['sparsity']:.10g},{rec['sensors']}\n")
