import numpy as np
import pytest

from hsrfusion import (
    SolverConfig,
    SpatialResponse,
    Window,
    build_counterexample,
    feasible_family,
    generate_scene,
    objective,
    project_columns_to_simplex,
    project_simplex,
    solve_coupled,
    spa_initialize,
)
from hsrfusion.model import spatial_decimate, spectral_decimate
from hsrfusion.solver import abundance_gradient, endmember_gradient
from conftest import desk_scene_config, random_simplex_columns


def identity_windows(n):
    return SpatialResponse(
        sr_pixel_count=n,
        windows=[Window(pixels=np.array([i]), weights=np.array([1.0])) for i in range(n)],
    )


def observe(gen, spatial):
    image = gen.scene.image
    return spectral_decimate(gen.spectral, image), spatial_decimate(image, spatial)


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def test_objective_zero_at_ground_truth(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=21), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    val = objective(gen.scene.endmembers, gen.scene.abundances, y_ms, y_hs,
                    gen.spectral, desk_spatial)
    assert val <= 1e-22


def test_objective_zero_on_counterexample_family():
    inst = build_counterexample(0.2)
    y_ms, y_hs = inst.observations()
    a, s = feasible_family(inst, 0.2, 0.0)
    val = objective(a, s, y_ms, y_hs, inst.spectral, inst.spatial)
    assert val <= 1e-24


def test_objective_hand_arithmetic():
    # 1x1 toy: both residuals are 1 and 2, objective is 1 + 4
    f = np.array([[1.0]])
    a = np.array([[1.0]])
    s = np.array([[1.0]])
    g = identity_windows(1)
    y_ms = np.array([[2.0]])
    y_hs = np.array([[3.0]])
    assert objective(a, s, y_ms, y_hs, f, g) == pytest.approx(5.0, abs=0)


def test_objective_dimension_mismatch():
    with pytest.raises(ValueError):
        objective(np.ones((2, 2)), np.ones((3, 4)) / 3, np.ones((1, 4)),
                  np.ones((2, 4)), np.ones((1, 2)), identity_windows(4))


# ---------------------------------------------------------------------------
# simplex projection
# ---------------------------------------------------------------------------

def test_project_simplex_fixed_point():
    v = np.array([0.5, 0.5])
    assert np.allclose(project_simplex(v), v, atol=0)


def test_project_simplex_vertex():
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0], atol=1e-15)


def test_project_simplex_interior_shift():
    # KKT: shift both coordinates by the same theta with none clipped
    assert np.allclose(project_simplex(np.array([0.4, 0.2])), [0.6, 0.4], atol=1e-15)


def test_project_simplex_idempotent():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.normal(scale=2.0, size=rng.integers(1, 9))
        once = project_simplex(v)
        twice = project_simplex(once)
        assert np.allclose(once, twice, atol=1e-14)
        assert once.min() >= 0.0
        assert once.sum() == pytest.approx(1.0, abs=1e-12)


def _bisection_projection(v, iters=200):
    # independent oracle: the projection is max(v - theta, 0) at the theta
    # where the clipped sum equals one; that sum is decreasing in theta
    lo, hi = float(v.min()) - 1.0, float(v.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def test_project_simplex_matches_bisection_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        v = rng.normal(scale=3.0, size=rng.integers(2, 12))
        assert np.abs(project_simplex(v) - _bisection_projection(v)).max() <= 1e-10


def test_project_simplex_rejects_empty():
    with pytest.raises(ValueError):
        project_simplex(np.array([]))


def test_project_columns_matches_single_vector():
    rng = np.random.default_rng(23)
    v = rng.normal(size=(5, 7))
    cols = project_columns_to_simplex(v)
    for j in range(7):
        assert np.allclose(cols[:, j], project_simplex(v[:, j]), atol=1e-14)


# ---------------------------------------------------------------------------
# successive projection initialization
# ---------------------------------------------------------------------------

def test_spa_recovers_distinct_pure_columns():
    rng = np.random.default_rng(5)
    a = rng.uniform(0.1, 0.9, size=(20, 5))
    picked = spa_initialize(a, 5)
    # same column set, any order
    found = {tuple(np.round(picked[:, i], 12)) for i in range(5)}
    expected = {tuple(np.round(a[:, i], 12)) for i in range(5)}
    assert found == expected


def test_spa_ignores_duplicate_columns():
    rng = np.random.default_rng(6)
    a = rng.uniform(0.1, 0.9, size=(10, 3))
    duplicated = np.concatenate([a, a[:, [0, 1]]], axis=1)
    base = spa_initialize(a, 3)
    extra = spa_initialize(duplicated, 3)
    assert {tuple(np.round(base[:, i], 12)) for i in range(3)} == \
           {tuple(np.round(extra[:, i], 12)) for i in range(3)}


def test_spa_single_pick_is_max_norm():
    y = np.array([[0.1, 0.9, 0.3], [0.0, 0.2, 0.1]])
    picked = spa_initialize(y, 1)
    assert np.allclose(picked[:, 0], y[:, 1], atol=0)


def test_spa_rank_collapse():
    y = np.outer(np.ones(4), np.ones(3))
    with pytest.raises(RuntimeError, match="rank collapse"):
        spa_initialize(y, 2)


# ---------------------------------------------------------------------------
# coupled solve
# ---------------------------------------------------------------------------

def test_warm_start_at_ground_truth_terminates_immediately(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=31), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    config = SolverConfig(materials=6, init="provided",
                          init_endmembers=gen.scene.endmembers,
                          init_abundances=gen.scene.abundances,
                          max_outer=50)
    solution = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    assert solution.objective_trace[0] <= 1e-22
    assert solution.objective_trace[-1] <= 1e-22
    assert solution.iterations == 1


def test_noiseless_solve_reaches_numerical_zero(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=32), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    config = SolverConfig(materials=6, max_outer=2000, inner_steps=20,
                          rel_tol=1e-13, objective_floor=1e-24)
    solution = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    assert solution.objective_trace[-1] < 1e-8


def test_trace_non_increasing_and_feasible(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=33), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    from hsrfusion import add_noise
    y_ms = add_noise(y_ms, 20.0, seed=1)
    y_hs = add_noise(y_hs, 20.0, seed=2)
    config = SolverConfig(materials=6, max_outer=60, inner_steps=5, rel_tol=1e-12)
    solution = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    trace = solution.objective_trace
    assert np.all(np.diff(trace) <= 1e-12 * np.maximum(trace[:-1], 1.0))
    assert solution.endmembers.min() >= 0.0
    assert solution.endmembers.max() <= 1.0
    assert solution.abundances.min() >= 0.0
    assert np.abs(solution.abundances.sum(axis=0) - 1.0).max() <= 1e-12


def test_solver_determinism(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=34), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    config = SolverConfig(materials=6, max_outer=40, inner_steps=5, rel_tol=1e-12,
                          init="random", seed=77)
    first = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    second = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    assert np.array_equal(first.endmembers, second.endmembers)
    assert np.array_equal(first.abundances, second.abundances)
    assert np.array_equal(first.objective_trace, second.objective_trace)


def test_backtracking_rule_also_descends(desk_spatial):
    gen = generate_scene(desk_scene_config(seed=35), desk_spatial)
    y_ms, y_hs = observe(gen, desk_spatial)
    config = SolverConfig(materials=6, max_outer=30, inner_steps=5,
                          step_rule="backtracking", rel_tol=1e-12)
    solution = solve_coupled(y_ms, y_hs, gen.spectral, desk_spatial, config)
    trace = solution.objective_trace
    assert np.all(np.diff(trace) <= 1e-12 * np.maximum(trace[:-1], 1.0))


# ---------------------------------------------------------------------------
# gradients against central differences
# ---------------------------------------------------------------------------

def _numeric_gradient(fun, x, h=1e-6):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (fun(xp) - fun(xm)) / (2 * h)
        it.iternext()
    return grad


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_block_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    m, mm, n, pixels = 6, 3, 3, 8
    f = rng.uniform(size=(mm, m))
    g = SpatialResponse(
        sr_pixel_count=pixels,
        windows=[
            Window(pixels=np.array([0, 1, 2, 3]), weights=np.full(4, 0.25)),
            Window(pixels=np.array([3, 4, 5]), weights=np.array([0.5, 0.25, 0.25])),
            Window(pixels=np.array([5, 6, 7]), weights=np.array([0.2, 0.4, 0.4])),
        ],
    )
    a = rng.uniform(0.2, 0.8, size=(m, n))
    s = random_simplex_columns(rng, n, pixels)
    y_ms = rng.uniform(size=(mm, pixels))
    y_hs = rng.uniform(size=(m, 3))

    grad_a = endmember_gradient(a, s, y_ms, y_hs, f, g)
    num_a = _numeric_gradient(lambda z: objective(z, s, y_ms, y_hs, f, g), a)
    assert np.linalg.norm(grad_a - num_a) / np.linalg.norm(num_a) < 1e-5

    grad_s = abundance_gradient(a, s, y_ms, y_hs, f, g)
    num_s = _numeric_gradient(lambda z: objective(a, z, y_ms, y_hs, f, g), s)
    assert np.linalg.norm(grad_s - num_s) / np.linalg.norm(num_s) < 1e-5
