import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacuna.lacunarity import (
    DbcStats,
    LacunarityConfig,
    PyramidDepthError,
    base_lacunarity,
    blur_binomial5,
    box_index,
    dbc_column_heights,
    dbc_lacunarity,
    dbc_plane,
    dbc_scale_planes,
    gaussian_pyramid,
    multiscale_lacunarity,
    multiscale_scale_planes,
    tanh_scale,
    variance_ratio,
)
from lacuna.tensor import GroupedMixWeights, PoolSpec

from _reference import (
    ref_blur_decimate,
    ref_bilinear,
    ref_box_index,
    ref_dbc_heights,
    ref_dbc_lacunarity_plane,
    ref_mix,
    ref_variance_ratio,
)


def _maps(seed, n=1, c=1, h=6, w=6, lo=1.0, hi=255.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(n, c, h, w))


# ---------------------------------------------------------------- tanh_scale

def test_tanh_scale_fixed_points():
    x = np.zeros((1, 1, 1, 1))
    assert tanh_scale(x)[0, 0, 0, 0] == 127.5
    lo = tanh_scale(np.full((1, 1, 1, 1), -40.0))[0, 0, 0, 0]
    hi = tanh_scale(np.full((1, 1, 1, 1), 40.0))[0, 0, 0, 0]
    assert abs(lo - 0.0) < 1e-12
    assert abs(hi - 255.0) < 1e-12


def test_tanh_scale_monotone_and_bounded():
    grid = np.linspace(-5, 5, 401).reshape(1, 1, 1, -1)
    y = tanh_scale(grid)[0, 0, 0]
    assert np.all(np.diff(y) > 0)
    assert y.min() > 0.0 and y.max() < 255.0


# ---------------------------------------------------------- gliding-box form

def test_variance_ratio_worked_window():
    # window [1, 1, 1, 3]: mean 1.5, variance 0.75 -> ratio 1/3
    x = np.array([1.0, 1.0, 1.0, 3.0]).reshape(1, 1, 2, 2)
    out = variance_ratio(x, PoolSpec.square(2), epsilon=1e-6)
    assert out.shape == (1, 1, 1, 1)
    assert abs(out[0, 0, 0, 0] - 1.0 / 3.0) < 1e-6


def test_base_lacunarity_constant_map_is_zero():
    cfg = LacunarityConfig(method="base", window=PoolSpec.square(3, stride=1),
                           normalize_input=False)
    out = base_lacunarity(np.full((2, 3, 7, 7), 42.0), cfg)
    assert np.all(out == 0.0)


def test_base_lacunarity_global_window_default():
    x = _maps(0, n=2, c=3, h=5, w=4)
    cfg = LacunarityConfig(method="base", normalize_input=False)
    out = base_lacunarity(x, cfg)
    assert out.shape == (2, 3, 1, 1)
    ref = ref_variance_ratio(x, 5, 4, 5, 4)
    assert np.allclose(out, ref, rtol=1e-6, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    kernel=st.integers(2, 4),
    stride=st.integers(1, 3),
    h=st.integers(4, 9),
    w=st.integers(4, 9),
)
def test_base_lacunarity_matches_oracle(seed, kernel, stride, h, w):
    x = _maps(seed, n=2, c=2, h=h, w=w)
    cfg = LacunarityConfig(
        method="base",
        window=PoolSpec.square(kernel, stride=stride),
        normalize_input=False,
    )
    out = base_lacunarity(x, cfg)
    ref = np.maximum(ref_variance_ratio(x, kernel, kernel, stride, stride), 0.0)
    assert np.allclose(out, ref, rtol=1e-6, atol=1e-5)


def test_base_lacunarity_normalized_path_composes():
    x = _maps(3, lo=-4.0, hi=4.0)
    cfg = LacunarityConfig(method="base", window=PoolSpec.square(2, stride=2))
    direct = base_lacunarity(x, cfg)
    squashed = (np.tanh(x) + 1.0) / 2.0 * 255.0
    ref = np.maximum(ref_variance_ratio(squashed, 2, 2, 2, 2), 0.0)
    assert np.allclose(direct, ref, rtol=1e-6, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       alpha=st.floats(0.5, 8.0, allow_nan=False))
def test_base_lacunarity_scale_invariant(seed, alpha):
    x = _maps(seed, h=6, w=6)
    cfg = LacunarityConfig(method="base", window=PoolSpec.square(3, stride=1),
                           normalize_input=False)
    assert np.allclose(base_lacunarity(alpha * x, cfg), base_lacunarity(x, cfg),
                       rtol=1e-6, atol=1e-5)


def test_base_lacunarity_rejects_wrong_method():
    with pytest.raises(ValueError):
        base_lacunarity(_maps(0), LacunarityConfig(method="dbc"))


# ------------------------------------------------------------- box counting

def test_box_index_examples():
    assert box_index(np.array(5.0), 10) == 1.0
    assert box_index(np.array(35.0), 10) == 4.0
    assert box_index(np.array(0.0), 3) == 1.0
    assert ref_box_index(5, 10) == 1
    assert ref_box_index(35, 10) == 4


def test_column_heights_worked_window():
    # dilation-10 3x3 window whose min is 5 and max 35: boxes 1 and 4 -> 2
    x = np.full((1, 1, 21, 21), 20.0)
    x[0, 0, 0, 0] = 5.0
    x[0, 0, 10, 10] = 35.0
    stats = dbc_column_heights(x, r=10, window=PoolSpec.square(3, stride=1))
    assert stats.heights.shape == (1, 1, 21, 21)
    # the center window samples rows/cols {0, 10, 20}, catching both extremes
    assert stats.heights[0, 0, 10, 10] == 2.0


def test_column_heights_flat_window_and_clamp():
    x = np.full((1, 1, 5, 5), 100.0)
    spec = PoolSpec.square(3, stride=1)
    raw = dbc_column_heights(x, r=4, window=spec)
    assert np.all(raw.heights == -1.0)
    clamped = dbc_column_heights(x, r=4, window=spec, clamp_heights=True)
    assert np.all(clamped.heights == 1.0)


def test_column_heights_rejects_even_or_nonsquare_windows():
    x = _maps(0)
    with pytest.raises(ValueError):
        dbc_column_heights(x, r=1, window=PoolSpec.square(2))
    with pytest.raises(ValueError):
        dbc_column_heights(x, r=1, window=PoolSpec(3, 5, 1, 1))
    with pytest.raises(ValueError):
        dbc_column_heights(x, r=0, window=PoolSpec.square(3))


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    r=st.integers(1, 4),
    stride=st.integers(1, 2),
    h=st.integers(5, 9),
    w=st.integers(5, 9),
)
def test_column_heights_match_oracle(seed, r, stride, h, w):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 256, size=(1, 2, h, w)).astype(np.float64)
    stats = dbc_column_heights(x, r=r, window=PoolSpec.square(3, stride=stride))
    ref = ref_dbc_heights(x, r, 3, stride)
    assert np.array_equal(stats.heights, ref)
    # heights are integers in [-1, number of boxes spanning 0..255]
    assert np.all(stats.heights == np.floor(stats.heights))
    assert stats.heights.min() >= -1.0
    assert stats.heights.max() <= np.floor(255.0 / r) + 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 3))
def test_mass_is_area_times_occupancy(seed, r):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 256, size=(1, 1, 8, 8)).astype(np.float64)
    stats = dbc_column_heights(x, r=r, window=PoolSpec.square(3, stride=1))
    assert np.array_equal(stats.mass, 9.0 * stats.occupancy)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 4))
def test_dbc_plane_matches_oracle(seed, r):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 256, size=(1, 2, 7, 7)).astype(np.float64)
    stats = dbc_column_heights(x, r=r, window=PoolSpec.square(3, stride=1))
    lib = dbc_plane(stats, epsilon=1e-6)
    ref = ref_dbc_lacunarity_plane(x, r, 3, 1, 1e-6)
    assert np.allclose(lib, ref, rtol=1e-12, atol=1e-12)


def test_dbc_scale_planes_layout():
    x = _maps(5, n=1, c=2, h=7, w=7, lo=-3.0, hi=3.0)
    cfg = LacunarityConfig(method="dbc", window=PoolSpec.square(3, stride=1),
                           dilation_set=(1, 2, 3))
    planes = dbc_scale_planes(x, cfg)
    assert planes.shape[1] == 2 * 3
    xs = tanh_scale(x)
    for c in range(2):
        for ri, r in enumerate((1, 2, 3)):
            single = dbc_plane(
                dbc_column_heights(xs[:, c:c + 1], r, cfg.window), cfg.epsilon)
            assert np.array_equal(planes[:, c * 3 + ri], single[:, 0])


def test_dbc_lacunarity_single_dilation_is_identity_mix():
    x = _maps(6, n=2, c=3, h=7, w=7, lo=-2.0, hi=2.0)
    cfg = LacunarityConfig(method="dbc", window=PoolSpec.square(3, stride=1),
                           dilation_set=(2,))
    out = dbc_lacunarity(x, cfg)
    raw = dbc_plane(dbc_column_heights(tanh_scale(x), 2, cfg.window), cfg.epsilon)
    assert out.shape == raw.shape
    assert np.allclose(out, raw, rtol=0, atol=0)


def test_dbc_lacunarity_default_mix_averages_dilations():
    x = _maps(7, n=1, c=2, h=9, w=9, lo=-2.0, hi=2.0)
    cfg = LacunarityConfig(method="dbc", window=PoolSpec.square(3, stride=1),
                           dilation_set=(1, 2, 3))
    out = dbc_lacunarity(x, cfg)
    planes = dbc_scale_planes(x, cfg)
    manual = planes.reshape(1, 2, 3, *planes.shape[2:]).mean(axis=2)
    assert out.shape == (1, 2, *planes.shape[2:])
    assert np.allclose(out, manual, rtol=1e-12, atol=1e-12)


def test_dbc_output_dims_shared_across_dilations():
    # identity padding keeps the heights grid size independent of r
    x = _maps(8, h=11, w=11)
    for stride in (1, 2):
        spec = PoolSpec.square(3, stride=stride)
        shapes = {
            dbc_column_heights(x, r, spec).heights.shape for r in (1, 2, 3, 5)
        }
        assert len(shapes) == 1


# ------------------------------------------------------------------- pyramid

def test_blur_preserves_constant_maps():
    x = np.full((1, 2, 6, 5), 3.25)
    assert np.allclose(blur_binomial5(x), x, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       h=st.integers(1, 8), w=st.integers(1, 8))
def test_blur_decimate_matches_oracle(seed, h, w):
    x = _maps(seed, n=1, c=2, h=h, w=w, lo=-5.0, hi=5.0)
    lib = blur_binomial5(x)[:, :, ::2, ::2]
    assert np.allclose(lib, ref_blur_decimate(x), rtol=1e-12, atol=1e-12)


def test_pyramid_level_dims():
    x = _maps(0, h=7, w=5)
    levels = gaussian_pyramid(x, 3)
    assert [lv.shape[2:] for lv in levels] == [(7, 5), (4, 3), (2, 2)]
    assert np.array_equal(levels[0], x)


def test_pyramid_depth_errors():
    x = _maps(0, h=7, w=5)
    with pytest.raises(PyramidDepthError):
        gaussian_pyramid(x, 4)  # needs dims >= 8
    with pytest.raises(PyramidDepthError):
        gaussian_pyramid(x, 0)
    assert len(gaussian_pyramid(x, 1)) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), levels=st.integers(1, 3))
def test_pyramid_range_containment(seed, levels):
    x = _maps(seed, h=9, w=9, lo=-7.0, hi=11.0)
    for lv in gaussian_pyramid(x, levels):
        assert lv.min() >= x.min() - 1e-12
        assert lv.max() <= x.max() + 1e-12


# ---------------------------------------------------------------- multiscale

def test_multiscale_single_scale_collapses_to_base():
    x = _maps(9, n=2, c=3, h=6, w=6, lo=-3.0, hi=3.0)
    for window in (None, PoolSpec.square(2, stride=2)):
        ms_cfg = LacunarityConfig(method="multiscale", window=window, scales=1)
        base_cfg = LacunarityConfig(method="base", window=window)
        mix = GroupedMixWeights.identity(3)
        out = multiscale_lacunarity(x, ms_cfg, mix)
        ref = base_lacunarity(x, base_cfg)
        assert np.array_equal(out, ref)


def test_multiscale_matches_composed_oracle():
    x = _maps(10, n=1, c=2, h=8, w=8, lo=-2.0, hi=2.0)
    cfg = LacunarityConfig(method="multiscale", scales=2)
    mix = GroupedMixWeights(np.array([[0.25, 0.75], [1.0, -0.5]]),
                            np.array([0.1, -0.2]))
    out = multiscale_lacunarity(x, cfg, mix)

    xs = (np.tanh(x) + 1.0) / 2.0 * 255.0
    lvl2 = ref_blur_decimate(xs)
    l1 = ref_variance_ratio(xs, 8, 8, 8, 8)
    l2 = ref_bilinear(ref_variance_ratio(lvl2, 4, 4, 4, 4), 1, 1)
    stacked = np.stack([l1, l2], axis=2).reshape(1, 4, 1, 1)
    ref = ref_mix(stacked, mix.weights, mix.bias)
    assert np.allclose(out, ref, rtol=1e-9, atol=1e-9)


def test_multiscale_planes_are_scale_major():
    x = _maps(11, n=1, c=2, h=8, w=8)
    cfg = LacunarityConfig(method="multiscale", scales=2,
                           window=PoolSpec.square(2, stride=2))
    planes = multiscale_scale_planes(x, cfg)
    assert planes.shape == (1, 4, 4, 4)
    # channel 0's pair first, then channel 1's pair
    xs = tanh_scale(x)
    l1 = variance_ratio(xs, PoolSpec.square(2, stride=2), cfg.epsilon)
    assert np.array_equal(planes[:, 0], l1[:, 0])
    assert np.array_equal(planes[:, 2], l1[:, 1])


def test_multiscale_rejects_mismatched_mix():
    x = _maps(12, n=1, c=2, h=8, w=8)
    cfg = LacunarityConfig(method="multiscale", scales=2)
    with pytest.raises(ValueError):
        multiscale_lacunarity(x, cfg, GroupedMixWeights.uniform(2, 3))
    with pytest.raises(ValueError):
        multiscale_lacunarity(x, cfg, GroupedMixWeights.uniform(5, 2))


# ------------------------------------------------------------- config checks

@pytest.mark.parametrize("kwargs", [
    dict(method="fractal"),
    dict(epsilon=0.0),
    dict(epsilon=-1e-6),
    dict(method="dbc", dilation_set=()),
    dict(method="dbc", dilation_set=(2, 1)),
    dict(method="dbc", dilation_set=(1, 1, 2)),
    dict(method="dbc", dilation_set=(0, 1)),
    dict(method="dbc", normalize_input=False),
    dict(scales=0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        LacunarityConfig(**kwargs)


def test_config_defaults():
    cfg = LacunarityConfig()
    assert cfg.method == "base"
    assert cfg.window is None
    assert cfg.epsilon == 1e-6
    assert cfg.dilation_set == (1, 2, 3)
    assert cfg.scales == 2
    assert cfg.normalize_input is True
    assert cfg.clamp_heights is False
