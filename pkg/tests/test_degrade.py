import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hsifuse.degrade import (ChainError, ContrastConfig, Effect, EffectChain, LowLightConfig,
                             ScatteringConfig, apply_chain, atmospheric_scattering,
                             contrast_enhance, make_depth_field, night_chain, parabola_alpha,
                             low_light, transmittance)
from hsifuse.scene import box_downsample

unit_images = arrays(np.float64, (2, 6, 6), elements=st.floats(0, 1, allow_nan=False))


def test_gamma_one_is_identity():
    img = np.random.default_rng(0).uniform(size=(3, 16, 16)).astype(np.float32)
    assert np.array_equal(low_light(img, LowLightConfig(1.0)), img)


def test_gamma_examples():
    img = np.array([[[0.0, 0.25, 1.0]]])
    assert low_light(img, LowLightConfig(2.0))[0, 0, 1] == pytest.approx(0.0625)
    img = np.array([[[0.2, 0.5, 0.8]]])
    assert low_light(img, LowLightConfig(2.0))[0, 0, 1] == pytest.approx(0.2 + 0.6 * 0.25)


def test_gamma_constant_band_unchanged():
    img = np.full((1, 4, 4), 0.3)
    assert np.array_equal(low_light(img, LowLightConfig(3.0)), img)


def test_gamma_below_one_rejected():
    with pytest.raises(ChainError):
        LowLightConfig(0.5)


@settings(max_examples=60, deadline=None)
@given(unit_images, st.floats(1.0, 6.0))
def test_gamma_never_brightens_and_fixes_extrema(img, gamma):
    out = low_light(img, LowLightConfig(gamma))
    assert np.all(out <= img + 1e-12)
    assert np.allclose(out.min(axis=(1, 2)), img.min(axis=(1, 2)))
    assert np.allclose(out.max(axis=(1, 2)), img.max(axis=(1, 2)))


def test_depth_field_seeded_and_bounded():
    cfg = ScatteringConfig(d_max=10.0, seed=42)
    a = make_depth_field((16, 16), cfg)
    assert np.array_equal(a, make_depth_field((16, 16), cfg))
    assert a.min() >= 0 and a.max() <= 10
    assert not np.array_equal(a, make_depth_field((16, 16), ScatteringConfig(seed=43)))


def test_transmittance_range():
    t = transmittance(np.array([0.0, 10.0]), 0.1)
    assert t[0] == 1.0 and t[1] == pytest.approx(math.exp(-1))


def test_zero_depth_is_identity():
    img = np.random.default_rng(1).uniform(size=(3, 8, 8))
    assert np.array_equal(atmospheric_scattering(img, np.zeros((8, 8)), ScatteringConfig()), img)


def test_scattering_numeric_example():
    out = atmospheric_scattering(np.ones((1, 1, 1)), np.full((1, 1), 10.0), ScatteringConfig(A=0.8, beta=0.1))
    expected = math.exp(-1) + 0.8 * (1 - math.exp(-1))
    assert out[0, 0, 0] == pytest.approx(expected, abs=1e-12)
    assert round(expected, 4) == 0.8736


def test_scattering_defaults():
    cfg = ScatteringConfig()
    assert (cfg.beta, cfg.A) == (0.1, 0.8)


def test_scattering_shape_mismatch():
    with pytest.raises(ChainError):
        atmospheric_scattering(np.zeros((3, 8, 8)), np.zeros((16, 16)), ScatteringConfig())


@settings(max_examples=60, deadline=None)
@given(unit_images, st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_scattering_is_convex_blend(img, A, seed):
    cfg = ScatteringConfig(A=A, seed=seed)
    depth = make_depth_field(img.shape[1:], cfg)
    out = atmospheric_scattering(img, depth, cfg)
    lo = np.minimum(img, A) - 1e-12
    hi = np.maximum(img, A) + 1e-12
    assert np.all((out >= lo) & (out <= hi))
    deeper = atmospheric_scattering(img, depth + 1.0, cfg)
    assert np.all(np.abs(deeper - A) <= np.abs(out - A) + 1e-12)


def test_parabola_through_three_points():
    for g_a in (0.1, 0.25, 0.4, 0.6, 0.9):
        a = parabola_alpha(g_a)
        f = lambda g: a * g * g + (1 - a) * g
        assert f(0.0) == 0.0 and f(1.0) == pytest.approx(1.0)
        assert f(g_a) == pytest.approx(0.5)
    assert parabola_alpha(0.5) == 0.0
    assert parabola_alpha(0.0) == 0.0 and parabola_alpha(1.0) == 0.0


def test_contrast_ga_quarter_maps_quarter_to_half():
    a = float(parabola_alpha(0.25))
    assert a * 0.25 ** 2 + (1 - a) * 0.25 == pytest.approx(0.5)


def test_contrast_constant_region_unchanged():
    img = np.full((2, 16, 16), 0.37)
    assert np.array_equal(contrast_enhance(img, ContrastConfig()), img)


def test_contrast_window_must_be_odd():
    with pytest.raises(ChainError):
        ContrastConfig(window=4)


@settings(max_examples=40, deadline=None)
@given(unit_images)
def test_contrast_output_in_unit_interval(img):
    out = contrast_enhance(img, ContrastConfig(sigma=1.0, window=3))
    assert out.shape == img.shape
    assert np.all((out >= 0) & (out <= 1))


def test_contrast_reference_pixel():
    """Recompute one pixel by hand from the stated local statistics."""
    from scipy import ndimage

    img = np.random.default_rng(7).uniform(size=(1, 9, 9)) ** 3
    cfg = ContrastConfig(sigma=1.0, window=3)
    out = contrast_enhance(img, cfg)
    guide = ndimage.gaussian_filter(img[0], 1.0, mode="nearest")
    y, x = 4, 4
    win = guide[y - 1:y + 2, x - 1:x + 2]
    m, M, a = win.min(), win.max(), win.mean()
    g = min(max((img[0, y, x] - m) / (M - m), 0), 1)
    ga = (a - m) / (M - m)
    alpha = (0.5 - ga) / (ga * ga - ga)
    assert out[0, y, x] == pytest.approx(min(max(alpha * g * g + (1 - alpha) * g, 0), 1), abs=1e-12)


def test_chain_order_enforced():
    with pytest.raises(ChainError):
        EffectChain((Effect("scattering"), Effect("low_light", {"gamma": 2})))
    with pytest.raises(ChainError):
        Effect("blur")
    kinds = [e.kind for e in night_chain(gamma=3, contrast=True).effects]
    assert kinds == ["low_light", "contrast", "scattering"]


def test_empty_chain_identity():
    rgb = np.random.default_rng(0).uniform(size=(3, 16, 16)).astype(np.float32)
    hsi = np.random.default_rng(1).uniform(size=(6, 8, 8)).astype(np.float32)
    r, h = apply_chain(rgb, hsi, EffectChain())
    assert np.array_equal(r, rgb) and np.array_equal(h, hsi)


def test_chain_deterministic_and_shared_depth():
    rgb = np.random.default_rng(0).uniform(size=(3, 16, 16))
    hsi = np.random.default_rng(1).uniform(size=(6, 8, 8))
    chain = EffectChain((Effect("scattering", {"A": 0.8, "beta": 0.1, "d_max": 10.0}),), seed=11)
    r1, h1 = apply_chain(rgb, hsi, chain)
    r2, h2 = apply_chain(rgb, hsi, chain)
    assert np.array_equal(r1, r2) and np.array_equal(h1, h2)
    depth = make_depth_field((16, 16), ScatteringConfig(seed=11))
    cfg = ScatteringConfig()
    assert np.array_equal(r1, atmospheric_scattering(rgb, depth, cfg))
    assert np.array_equal(h1, atmospheric_scattering(hsi, box_downsample(depth, 2), cfg))


def test_chain_can_skip_hsi():
    rgb = np.random.default_rng(0).uniform(size=(3, 16, 16))
    hsi = np.random.default_rng(1).uniform(size=(6, 8, 8))
    chain = EffectChain(night_chain(gamma=2).effects, seed=1, degrade_hsi=False)
    _, h = apply_chain(rgb, hsi, chain)
    assert np.array_equal(h, hsi)


def test_chain_json_round_trip():
    chain = night_chain(gamma=2.0, A=0.95, contrast=True, seed=5)
    back = EffectChain.from_json(chain.to_json())
    assert back == chain
    assert chain.to_json()[0] == {"kind": "low_light", "params": {"gamma": 2.0}, "seed": 5}
