import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import gaussian_model, make_series, random_spd
from sensorplace.entropy import (
    EntropyConfig,
    PixelStats,
    conditional_nlls,
    entropy_closed_form,
    entropy_field,
    entropy_held_in,
    entropy_monte_carlo,
    fit_patch_model,
    fit_pixel_gaussian,
    patch_nll,
    pixel_entropy,
)
from sensorplace.errors import InsufficientData, InvalidArgument
from sensorplace.fields import Field, PatchSet, extract_patches, make_ordering, raster_ordering
from sensorplace.synth import SynthConfig, generate

H_UNIT = 1.418939  # (1 + ln 2 pi) / 2


def patch_set(X, L, centers=None):
    n = len(X)
    centers = np.tile([L // 2, L // 2], (n, 1)) if centers is None else centers
    return PatchSet(L, centers, np.asarray(X, float), np.arange(n), raster_ordering(L))


# pixel model


def test_pixel_gaussian_alternating():
    vals = np.array([-1.0, 1.0]).reshape(2, 1, 1)
    st_ = fit_pixel_gaussian(make_series(vals))
    assert st_.mu.values[0, 0] == 0.0
    assert st_.sigma.values[0, 0] == pytest.approx(np.sqrt(2), abs=1e-15)


def test_pixel_gaussian_constant_and_land():
    land = np.array([[False, True]])
    s = make_series(np.ones((4, 1, 2)), land)
    ps = fit_pixel_gaussian(s)
    assert ps.sigma.values[0, 0] == 0.0
    assert np.isnan(ps.sigma.values[0, 1])
    H = pixel_entropy(ps)
    assert H.H.values[0, 0] == -np.inf and not H.valid[0, 0]
    assert not H.valid[0, 1]


def test_pixel_gaussian_needs_two_steps():
    with pytest.raises(InsufficientData):
        fit_pixel_gaussian(make_series(np.ones((1, 2, 2))))


def test_pixel_entropy_values():
    land = np.zeros((1, 2), bool)
    ps = PixelStats(Field(np.zeros((1, 2)), land), Field(np.array([[1.0, 2.0]]), land))
    H = pixel_entropy(ps).H.values[0]
    assert H[0] == pytest.approx(H_UNIT, abs=1e-6)
    assert H[1] == pytest.approx(2.112086, abs=1e-6)


@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=20))
def test_pixel_entropy_monotone(sigmas):
    s = np.sort(np.array(sigmas))[None, :]
    land = np.zeros_like(s, bool)
    H = pixel_entropy(PixelStats(Field(np.zeros_like(s), land), Field(s, land))).H.values[0]
    assert (np.diff(H) >= 0).all()


# patch model: likelihood


def test_patch_nll_examples():
    assert patch_nll(gaussian_model(np.eye(1)), 0, np.zeros(1)) == pytest.approx(0.918939, abs=1e-6)
    assert patch_nll(gaussian_model(np.eye(4)), 0, np.zeros(4)) == pytest.approx(3.675754, abs=1e-6)


def test_patch_nll_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        patch_nll(gaussian_model(np.eye(4)), 0, np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(1, 4))
def test_patch_nll_matches_dense_inverse(seed, L):
    rng = np.random.default_rng(seed)
    d = L * L
    cov = random_spd(rng, d)
    mean = rng.normal(size=d)
    x = rng.normal(size=d) * 2
    model = gaussian_model(cov, mean)
    r = x - mean
    _, logdet = np.linalg.slogdet(cov)
    oracle = 0.5 * (d * np.log(2 * np.pi) + logdet + r @ np.linalg.inv(cov) @ r)
    assert patch_nll(model, 0, x) == pytest.approx(oracle, rel=1e-10)
    assert conditional_nlls(model, 0, x).sum() == pytest.approx(oracle, rel=1e-10)
    assert stats.multivariate_normal(mean, cov).logpdf(x) == pytest.approx(-oracle, rel=1e-10)


# patch model: closed-form entropy


def test_closed_form_identity():
    model = gaussian_model(np.eye(9))
    for s in (1, 2, 3):
        assert entropy_closed_form(model, 0, s) == pytest.approx(H_UNIT, abs=1e-6)


def test_closed_form_diagonal_prefix():
    model = gaussian_model(np.diag([1.0, 4.0, 9.0, 16.0]))
    assert entropy_closed_form(model, 0, 1) == pytest.approx(H_UNIT, abs=1e-6)
    # (4 * H_UNIT + ln(576) / 2) / 4, evaluated independently
    oracle = (4 * 0.5 * (1 + np.log(2 * np.pi)) + 0.5 * np.log(576.0)) / 4
    assert oracle == pytest.approx(2.213452, abs=1e-6)
    assert entropy_closed_form(model, 0, 2) == pytest.approx(oracle, rel=1e-12)
    with pytest.raises(InvalidArgument):
        entropy_closed_form(model, 0, 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(1, 4))
def test_cholesky_prefix_chain_rule(seed, L):
    rng = np.random.default_rng(seed)
    d = L * L
    cov = random_spd(rng, d)
    model = gaussian_model(cov)
    chol_diag = np.diag(model.bins[0].chol)
    for k in range(1, d + 1):
        cond_sum = (0.5 * np.log(2 * np.pi * np.e) + np.log(chol_diag[:k])).sum()
        joint = 0.5 * (k * np.log(2 * np.pi * np.e) + np.linalg.slogdet(cov[:k, :k])[1])
        assert cond_sum == pytest.approx(joint, rel=1e-10, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(2, 4))
def test_full_entropy_ordering_invariant(seed, L):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(200, L, L)) @ rng.normal(size=(L, L))
    cfg = EntropyConfig(patch_size=L, scale=L, bin_stride=1, min_samples=1)
    full = {}
    for name in ("raster", "spiral"):
        o = make_ordering(name, L)
        ps = PatchSet(L, np.tile([L // 2, L // 2], (200, 1)), o.serialize(X), np.arange(200), o)
        full[name] = entropy_closed_form(fit_patch_model(ps, cfg), 0, L)
    assert full["raster"] == pytest.approx(full["spiral"], rel=1e-10)


def test_prefix_entropies_differ_by_ordering():
    rng = np.random.default_rng(0)
    L = 4
    scales = np.linspace(0.5, 3.0, L * L).reshape(L, L)
    X = rng.normal(size=(500, L, L)) * scales
    cfg = EntropyConfig(patch_size=L, scale=2, bin_stride=1)
    vals = []
    for name in ("raster", "spiral"):
        o = make_ordering(name, L)
        ps = PatchSet(L, np.tile([2, 2], (500, 1)), o.serialize(X), np.arange(500), o)
        vals.append(entropy_closed_form(fit_patch_model(ps, cfg), 0, 2))
    assert abs(vals[0] - vals[1]) > 0.05


# patch model: estimators


def test_held_in_is_average_patch_nll():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 9)) @ rng.normal(size=(9, 9))
    cfg = EntropyConfig(patch_size=3, scale=3, bin_stride=1)
    model = fit_patch_model(patch_set(X, 3), cfg)
    for s in (1, 2, 3):
        d = s * s
        avg = patch_nll(model, 0, X, s).mean() / d
        assert entropy_held_in(model, 0, s) == pytest.approx(avg, rel=1e-10)
    # bootstrap weights: weighted average over the resampled multiset
    bs = fit_patch_model(patch_set(X, 3), cfg, resample_seed=11)
    w = np.random.default_rng([11, 0]).multinomial(300, np.full(300, 1 / 300))
    avg = (w * patch_nll(bs, 0, X, 3)).sum() / w.sum() / 9
    assert entropy_held_in(bs, 0, 3) == pytest.approx(avg, rel=1e-10)


def test_monte_carlo_unit_example_and_determinism():
    model = gaussian_model(np.eye(1))
    assert entropy_monte_carlo(model, 0, 1, 100_000, 0) == pytest.approx(1.4189, abs=0.01)
    a = entropy_monte_carlo(model, 0, 1, 1, 42)
    assert a == entropy_monte_carlo(model, 0, 1, 1, 42)
    with pytest.raises(InvalidArgument):
        entropy_monte_carlo(model, 0, 1, 0, 0)


@pytest.mark.parametrize("seed", range(5))
def test_monte_carlo_converges_to_closed_form(seed):
    rng = np.random.default_rng(100 + seed)
    model = gaussian_model(random_spd(rng, 9), rng.normal(size=9))
    for s in (1, 2, 3):
        est, se = entropy_monte_carlo(model, 0, s, 100_000, seed, with_stderr=True)
        assert abs(est - entropy_closed_form(model, 0, s)) < 3 * se


# patch model: fitting


def test_constant_patches_shrink_to_floor():
    v = np.arange(4, dtype=float)
    cfg = EntropyConfig(patch_size=2, scale=2, bin_stride=1, min_samples=1)
    model = fit_patch_model(patch_set(np.tile(v, (10, 1)), 2), cfg)
    pb = model.bins[0]
    assert np.array_equal(pb.mean, v)
    assert pb.degenerate
    assert np.allclose(pb.chol, np.sqrt(pb.shrinkage) * np.eye(4))
    assert pb.shrinkage == cfg.shrinkage_floor


def test_iid_covariance_sampling_oracle():
    X = np.random.default_rng(5).normal(size=(10_000, 4))
    cfg = EntropyConfig(patch_size=2, scale=2, bin_stride=1)
    cov = fit_patch_model(patch_set(X, 2), cfg).bins[0].covariance
    off = cov[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 0.05
    assert np.allclose(np.diag(cov), 1.0, rtol=0.05)


def test_shrinkage_is_relative_to_mean_diagonal():
    X = np.random.default_rng(6).normal(size=(1000, 4)) * 3.0
    cfg = EntropyConfig(patch_size=2, scale=2, bin_stride=1)
    pb = fit_patch_model(patch_set(X, 2), cfg).bins[0]
    mle = np.cov(X.T, ddof=0)
    assert pb.shrinkage == pytest.approx(1e-3 * np.trace(mle) / 4, rel=1e-12)
    assert np.allclose(pb.covariance, mle, atol=1e-10)
    assert (np.diag(pb.chol) > 0).all()


def test_small_bins_dropped_with_warning():
    X = np.random.default_rng(2).normal(size=(3, 4))
    cfg = EntropyConfig(patch_size=2, scale=2, bin_stride=1)
    with pytest.warns(RuntimeWarning, match="dropped"):
        model = fit_patch_model(patch_set(X, 2), cfg)
    assert model.bins == [] and model.dropped == [(1, 1)]


def test_bins_pool_neighbouring_centers():
    rng = np.random.default_rng(3)
    s = make_series(rng.normal(size=(40, 8, 8)))
    ps = extract_patches(s, 2, 1, raster_ordering(2))
    model = fit_patch_model(ps, EntropyConfig(patch_size=2, scale=2, bin_stride=2))
    centers = model.centers()
    assert ((centers - 1) % 2 == 0).all()
    # bin (3, 3) pools centers with |dr|, |dc| <= 2: a 5 x 5 block, 40 steps each
    pb = next(b for b in model.bins if b.center == (3, 3))
    assert pb.count == 25 * 40


# entropy field


def small_synth(**kw):
    return generate(SynthConfig(rows=24, cols=24, front_band=(8, 16), **kw))


def test_entropy_field_front_band():
    s = generate(SynthConfig())
    ef = entropy_field(s[:584], EntropyConfig(ensemble=2))
    H = ef.H.values
    band = np.zeros(H.shape, bool)
    band[24:40] = True
    inside = np.median(H[band & ef.valid])
    outside = np.median(H[~band & ef.valid])
    assert inside > outside
    assert np.isfinite(H[ef.valid]).all()
    assert not ef.valid[s.land].any()


def test_ensemble_of_identical_members():
    s = small_synth()
    base = EntropyConfig(patch_size=4, scale=4, patch_stride=2, bin_stride=2, bootstrap=False)
    f1 = entropy_field(s, EntropyConfig(**{**base.__dict__, "ensemble": 1}))
    f3 = entropy_field(s, EntropyConfig(**{**base.__dict__, "ensemble": 3}))
    assert np.allclose(f1.H.values[f1.valid], f3.H.values[f3.valid], rtol=1e-12, atol=1e-12)


def test_entropy_field_scales_and_estimators():
    s = small_synth()
    kw = dict(patch_size=4, patch_stride=2, bin_stride=2, ensemble=1, bootstrap=False)
    ho = entropy_field(s, EntropyConfig(scale=2, **kw))
    cf = entropy_field(s, EntropyConfig(scale=2, estimator="closed-form", **kw))
    mc = entropy_field(s, EntropyConfig(scale=2, estimator="monte-carlo", mc_samples=4000, **kw))
    # shrinkage puts held-in just below the closed form; MC scatters around it
    assert (ho.bin_values <= cf.bin_values + 1e-12).all()
    assert np.abs(mc.bin_values - cf.bin_values).max() < 0.05
    assert np.isfinite(ho.H.values[ho.valid]).all()
    assert ho.scale == 2


def test_ensemble_reduces_variance():
    """Bootstrap ensemble means spread less across reruns than single members."""
    rng = np.random.default_rng(0)
    X = rng.standard_t(4, size=(80, 9)) @ rng.normal(size=(9, 9))
    ps = patch_set(X, 3)
    from sensorplace.entropy import ensemble_bin_entropy
    single, ens = [], []
    for seed in range(25):
        kw = dict(patch_size=3, scale=3, bin_stride=1, seed=seed)
        single.append(ensemble_bin_entropy(ps, EntropyConfig(ensemble=1, **kw))[1][0])
        ens.append(ensemble_bin_entropy(ps, EntropyConfig(ensemble=8, **kw))[1][0])
    assert np.var(ens, ddof=1) < np.var(single, ddof=1)
    f = stats.f.sf(np.var(single, ddof=1) / np.var(ens, ddof=1), 24, 24)
    assert f < 0.05


def test_constant_series_insufficient():
    s = make_series(np.ones((30, 8, 8)))
    with pytest.raises(InsufficientData):
        entropy_field(s, EntropyConfig(patch_size=4, scale=4, ensemble=1))


def test_all_land_windows_insufficient():
    land = np.zeros((8, 8), bool)
    land[:, ::3] = True
    s = make_series(np.random.default_rng(0).normal(size=(30, 8, 8)), land)
    with pytest.raises(InsufficientData):
        entropy_field(s, EntropyConfig(patch_size=4, scale=4, ensemble=1))


@pytest.mark.parametrize("bad", [dict(scale=9), dict(scale=0), dict(ensemble=0), dict(mc_samples=0),
                                 dict(estimator="pixelcnn"), dict(ordering="zigzag")])
def test_entropy_config_validation(bad):
    with pytest.raises(InvalidArgument):
        EntropyConfig(**bad)
