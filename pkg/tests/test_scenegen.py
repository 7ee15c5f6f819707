import math

import numpy as np
import pytest

from hsrfusion import (
    SceneConfig,
    add_noise,
    build_spatial_response,
    build_spectral_response,
    check_assumptions,
    decimate_abundances,
    dominance_monte_carlo,
    dominance_probability,
    generate_scene,
    kruskal_rank,
    mse,
)
from conftest import desk_scene_config


# ---------------------------------------------------------------------------
# spectral response builder
# ---------------------------------------------------------------------------

def test_spectral_blocks_even_split():
    f = build_spectral_response(6, 2)
    expected = np.array([
        [1 / 3, 1 / 3, 1 / 3, 0, 0, 0],
        [0, 0, 0, 1 / 3, 1 / 3, 1 / 3],
    ])
    assert np.allclose(f, expected, atol=0)


def test_spectral_single_row_matches_counterexample_up_to_scale():
    f = build_spectral_response(3, 1)
    assert np.allclose(f, np.array([[1 / 3, 1 / 3, 1 / 3]]), atol=0)
    assert np.allclose(3.0 * f, np.array([[1.0, 1.0, 1.0]]), atol=0)


def test_spectral_blocks_uneven_split():
    f = build_spectral_response(178, 6)
    sizes = (f > 0).sum(axis=1)
    assert sizes.tolist() == [30, 30, 30, 30, 29, 29]
    assert np.allclose(f.sum(axis=1), 1.0, atol=1e-14)
    # blocks are contiguous and partition the band axis
    starts = [int(np.flatnonzero(row)[0]) for row in f]
    assert starts == sorted(starts)
    assert (f > 0).sum(axis=0).tolist() == [1] * 178


def test_spectral_requires_strictly_fewer_rows():
    with pytest.raises(ValueError):
        build_spectral_response(4, 4)


# ---------------------------------------------------------------------------
# spatial response builder
# ---------------------------------------------------------------------------

def test_uniform_box_window():
    g = build_spatial_response(2, 2, kernel="uniform", kernel_size=2, factor=2)
    assert g.hs_pixel_count == 1
    win = g.windows[0]
    assert sorted(win.pixels.tolist()) == [0, 1, 2, 3]
    assert np.allclose(win.weights, 0.25, atol=0)


def test_gaussian_windows_match_kernel_oracle():
    var = 1.0
    g = build_spatial_response(4, 4, kernel="gaussian", kernel_size=3, variance=var, factor=2)
    assert g.hs_pixel_count == 4
    for i, win in enumerate(g.windows):
        assert abs(win.weights.sum() - 1.0) <= 1e-12
        cy, cx = divmod(i, 2)
        center_y = cy * 2 + 0.5
        center_x = cx * 2 + 0.5
        raw = []
        for p in win.pixels:
            row, col = divmod(int(p), 4)
            raw.append(math.exp(-((row - center_y) ** 2 + (col - center_x) ** 2) / (2 * var)))
        expected = np.array(raw) / np.sum(raw)
        assert np.allclose(win.weights, expected, rtol=1e-12, atol=1e-15)


def test_paper_scale_window_count():
    g = build_spatial_response(120, 120, kernel="gaussian", kernel_size=11,
                               variance=1.7 ** 2, factor=4)
    assert g.hs_pixel_count == 900
    assert g.validate() == []


def test_kernel_too_small_for_coverage():
    with pytest.raises(ValueError):
        build_spatial_response(8, 8, kernel="uniform", kernel_size=1, factor=2)


def test_builder_output_always_satisfies_window_invariants():
    rng = np.random.default_rng(14)
    for _ in range(12):
        factor = int(rng.integers(2, 5))
        width = factor * int(rng.integers(2, 6))
        height = factor * int(rng.integers(2, 6))
        size = factor + int(rng.integers(0, 4))
        kernel = "gaussian" if rng.integers(2) else "uniform"
        g = build_spatial_response(width, height, kernel=kernel, kernel_size=size,
                                   variance=float(rng.uniform(0.5, 3.0)), factor=factor)
        assert g.validate() == []
        assert g.hs_pixel_count == (width // factor) * (height // factor)


# ---------------------------------------------------------------------------
# scene generation
# ---------------------------------------------------------------------------

def test_generated_scene_has_identity_submatrix(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=2), desk_spatial)
    decimated = decimate_abundances(gen.scene.abundances, desk_spatial)
    sub = decimated[:, gen.pure_windows]
    assert np.abs(sub - np.eye(6)).max() <= 1e-12


def test_generated_scene_respects_kruskal_sparsity(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=4), desk_spatial)
    decimated = decimate_abundances(gen.scene.abundances, desk_spatial)
    k = kruskal_rank(gen.spectral @ gen.scene.endmembers)
    assert int((np.abs(decimated) > 1e-9).sum(axis=0).max()) <= k


def test_generated_scene_is_deterministic(desk_spatial):
    first = generate_scene(desk_scene_config(seed=9), desk_spatial)
    second = generate_scene(desk_scene_config(seed=9), desk_spatial)
    assert np.array_equal(first.scene.endmembers, second.scene.endmembers)
    assert np.array_equal(first.scene.abundances, second.scene.abundances)
    assert first.pure_windows == second.pure_windows


def test_dominance_enforced_scene_passes_all_checks():
    config = SceneConfig(sr_bands=64, ms_bands=4, materials=2, width=8, height=8,
                         factor=2, max_support=2, kernel="uniform", kernel_size=2,
                         seed=12)
    g = build_spatial_response(8, 8, kernel="uniform", kernel_size=2, factor=2)
    gen = generate_scene(config, g)
    report = check_assumptions(gen.scene.endmembers, gen.scene.abundances, gen.spectral, g)
    assert report.all_passed


def test_overlapping_kernel_scene_respects_sparsity_with_small_rank():
    # two MS bands cap the Kruskal rank at 2 while six materials are in play
    config = SceneConfig(sr_bands=50, ms_bands=2, materials=6, width=24, height=24,
                         factor=2, max_support=2, kernel="gaussian", kernel_size=3,
                         kernel_var=1.0, seed=3, require_dominance=False)
    g = build_spatial_response(24, 24, kernel="gaussian", kernel_size=3, variance=1.0, factor=2)
    gen = generate_scene(config, g)
    report = check_assumptions(gen.scene.endmembers, gen.scene.abundances, gen.spectral, g)
    assert report.full_rank and report.sparsity and report.pure_pixels
    assert report.kruskal == 2


def test_pure_windows_fit_on_small_grid_with_overlapping_kernel():
    # rings of different pure zones may interleave; only the zones need
    # isolation, so six pure windows fit on an 8x8 cell grid even with an
    # overlapping kernel
    config = SceneConfig(sr_bands=50, ms_bands=6, materials=6, width=16, height=16,
                         factor=2, max_support=3, kernel="gaussian", kernel_size=3,
                         kernel_var=1.2, seed=99, require_dominance=False)
    g = build_spatial_response(16, 16, kernel="gaussian", kernel_size=3,
                               variance=1.2, factor=2)
    gen = generate_scene(config, g)
    report = check_assumptions(gen.scene.endmembers, gen.scene.abundances,
                               gen.spectral, g)
    assert report.full_rank and report.sparsity and report.pure_pixels


def test_rejection_budget_exhaustion_reports_rates():
    # six materials at fifty bands: the dominance condition is essentially
    # never satisfied by uniform draws, so the budget runs out
    config = SceneConfig(sr_bands=50, ms_bands=6, materials=6, width=8, height=8,
                         factor=2, max_support=2, kernel="uniform", kernel_size=2,
                         seed=0, require_dominance=True, max_draws=50)
    g = build_spatial_response(8, 8, kernel="uniform", kernel_size=2, factor=2)
    with pytest.raises(RuntimeError, match="rejection budget exhausted"):
        generate_scene(config, g)


def test_unsatisfiable_support_errors():
    with pytest.raises(ValueError, match="max_support"):
        config = SceneConfig(sr_bands=8, ms_bands=1, materials=3, width=8, height=8,
                             factor=2, max_support=2, kernel="uniform", kernel_size=2,
                             seed=0, require_dominance=False)
        g = build_spatial_response(8, 8, kernel="uniform", kernel_size=2, factor=2)
        generate_scene(config, g)


def test_acceptance_rate_meets_analytic_floor():
    # the analytic dominance probability is a lower bound on the rejection
    # loop's acceptance rate, up to binomial noise
    trials = 1000
    result = dominance_monte_carlo(2, 64, trials, seed=123)
    analytic = dominance_probability(2, 64).clamped
    sigma = math.sqrt(analytic * (1 - analytic) / trials)
    assert result.rate >= analytic - 3 * sigma


# ---------------------------------------------------------------------------
# noise and error metrics
# ---------------------------------------------------------------------------

def test_add_noise_infinite_snr_is_identity():
    y = np.arange(6.0).reshape(2, 3)
    out = add_noise(y, math.inf, seed=0)
    assert np.array_equal(out, y)
    assert out is not y


def test_add_noise_hits_target_snr_exactly():
    rng = np.random.default_rng(0)
    y = rng.uniform(1.0, 2.0, size=(5, 40))
    noisy = add_noise(y, 20.0, seed=99)
    realized = 10.0 * math.log10(
        np.linalg.norm(y) ** 2 / np.linalg.norm(noisy - y) ** 2
    )
    assert realized == pytest.approx(20.0, abs=1e-9)


def test_add_noise_rejects_zero_signal():
    with pytest.raises(ValueError):
        add_noise(np.zeros((2, 2)), 20.0, seed=0)


def test_mse_identical_is_zero():
    x = np.random.default_rng(1).normal(size=(3, 4))
    assert mse(x, x) == 0.0


def test_mse_constant_offset():
    x = np.random.default_rng(2).normal(size=(3, 4))
    c = 0.37
    assert mse(x, x + c) == pytest.approx(c * c, rel=1e-12)


def test_mse_matches_double_loop_oracle():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 6))
    b = rng.normal(size=(4, 6))
    acc = 0.0
    for i in range(4):
        for j in range(6):
            acc += (a[i, j] - b[i, j]) ** 2
    assert mse(a, b) == pytest.approx(acc / 24.0, rel=1e-13)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# config invariants
# ---------------------------------------------------------------------------

def test_config_rejects_nondividing_factor():
    with pytest.raises(ValueError):
        SceneConfig(sr_bands=10, ms_bands=2, materials=2, width=9, height=8,
                    factor=2, max_support=1)


def test_config_rejects_single_material():
    with pytest.raises(ValueError):
        SceneConfig(sr_bands=10, ms_bands=2, materials=1, width=8, height=8,
                    factor=2, max_support=1)
