"""Alternating projected descent for the coupled fitting problem.

Minimizes  |Y_ms - F A S|_F^2 + |Y_hs - A S G|_F^2  over endmembers A in
the unit box and abundance columns on the unit simplex, alternating
projected gradient steps on the A block and on the S block. Step sizes
come from exact per-block Lipschitz constants, with halving as a
numerical safety net, so the objective trace never increases and every
iterate is feasible by projection.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import SpatialResponse

_TINY = 1e-300


@dataclass
class SolverConfig:
    """Knobs of the alternating scheme; all plumbing, no model content."""

    materials: int
    max_outer: int = 5000
    inner_steps: int = 10
    rel_tol: float = 1e-10
    objective_floor: float = 0.0
    step_rule: str = "lipschitz"  # or "backtracking"
    init: str = "pure-pixel"      # "random" | "provided"
    seed: int = 0
    init_endmembers: np.ndarray | None = field(default=None, repr=False)
    init_abundances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.materials < 1:
            raise ValueError("materials must be >= 1")
        if self.max_outer < 1 or self.inner_steps < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.step_rule not in ("lipschitz", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.init not in ("pure-pixel", "random", "provided"):
            raise ValueError(f"unknown init mode {self.init!r}")


@dataclass
class Solution:
    """Feasible factorization estimate with its convergence record."""

    endmembers: np.ndarray
    abundances: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    termination: str

    def reconstruction(self):
        return self.endmembers @ self.abundances


def _spatial_matrix(g):
    if isinstance(g, SpatialResponse):
        return g.to_dense()
    return np.asarray(g, dtype=float)


def objective(endmembers, abundances, y_ms, y_hs, spectral, spatial):
    """Coupled data fidelity: |Y_ms - F A S|_F^2 + |Y_hs - A S G|_F^2."""
    g = _spatial_matrix(spatial)
    a = np.asarray(endmembers, dtype=float)
    s = np.asarray(abundances, dtype=float)
    f = np.asarray(spectral, dtype=float)
    if a.shape[1] != s.shape[0] or f.shape[1] != a.shape[0]:
        raise ValueError("endmember/abundance/spectral dimensions do not chain")
    if s.shape[1] != g.shape[0]:
        raise ValueError("abundance pixel count does not match the spatial response")
    x = a @ s
    r_ms = np.asarray(y_ms, dtype=float) - f @ x
    r_hs = np.asarray(y_hs, dtype=float) - x @ g
    return float(np.sum(r_ms * r_ms) + np.sum(r_hs * r_hs))


# ---------------------------------------------------------------------------
# Simplex projection
# ---------------------------------------------------------------------------

def project_columns_to_simplex(v):
    """Euclidean projection of every column onto the unit simplex.

    Sort-based threshold: with the column sorted decreasingly, the active
    size is the largest k for which u_k > (sum of the top k - 1) / k, and
    the output is max(v - theta, 0) at the matching threshold. Exact in
    O(n log n) per column.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ValueError("need a nonempty 2-D array of column vectors")
    n = v.shape[0]
    u = np.sort(v, axis=0)[::-1]
    partial = (np.cumsum(u, axis=0) - 1.0) / np.arange(1, n + 1)[:, None]
    active = u - partial > 0.0
    k = n - 1 - np.argmax(active[::-1], axis=0)
    theta = partial[k, np.arange(v.shape[1])]
    return np.maximum(v - theta[None, :], 0.0)


def project_simplex(v):
    """Euclidean projection of a single vector onto the unit simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a nonempty vector")
    return project_columns_to_simplex(v[:, None])[:, 0]


# ---------------------------------------------------------------------------
# Pure-pixel initialization
# ---------------------------------------------------------------------------

def spa_initialize(y_hs, materials):
    """Pick endmember candidates by successive projection.

    Greedy: take the column of largest residual norm, deflate the matrix by
    the orthogonal projector of the chosen column, repeat. Ties go to the
    lowest column index. On noiseless data with a pure pixel per material
    and full-column-rank endmembers the chosen columns are exactly the
    endmember columns, up to order. Output is clipped to [0, 1].
    """
    y = np.asarray(y_hs, dtype=float)
    if materials > y.shape[1]:
        raise ValueError("more materials than HS pixels")
    if materials > y.shape[0]:
        raise ValueError("more materials than spectral bands")
    residual = y.copy()
    norms0 = np.einsum("ij,ij->j", residual, residual)
    floor = float(norms0.max()) * 1e-24
    picks = []
    for _ in range(materials):
        norms = np.einsum("ij,ij->j", residual, residual)
        j = int(np.argmax(norms))
        if norms[j] <= floor:
            raise RuntimeError(
                f"rank collapse after {len(picks)} picks: residual is numerically zero"
            )
        picks.append(j)
        q = residual[:, j] / np.sqrt(norms[j])
        residual -= np.outer(q, q @ residual)
    return np.clip(y[:, picks], 0.0, 1.0)


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------

def _sym_norm(m):
    """Largest eigenvalue of a small symmetric PSD matrix."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(m)[-1])


def _descend(x, grad, lipschitz, project, evaluate, f_current, step_scale):
    """One projected gradient step with halving safety; returns the new
    iterate, objective and the accepted step scale."""
    scale = step_scale
    for _ in range(60):
        step = scale / lipschitz
        x_new = project(x - step * grad)
        f_new = evaluate(x_new)
        if f_new <= f_current * (1.0 + 1e-12) + 1e-300:
            return x_new, f_new, scale
        scale *= 0.5
    return x, f_current, scale


def endmember_gradient(endmembers, abundances, y_ms, y_hs, spectral, spatial):
    """Gradient of the coupled objective in the endmember block."""
    g = _spatial_matrix(spatial)
    s = np.asarray(abundances, dtype=float)
    f = np.asarray(spectral, dtype=float)
    sg = s @ g
    x = endmembers @ s
    return 2.0 * (f.T @ (f @ x - y_ms) @ s.T + (endmembers @ sg - y_hs) @ sg.T)


def abundance_gradient(endmembers, abundances, y_ms, y_hs, spectral, spatial):
    """Gradient of the coupled objective in the abundance block."""
    g = _spatial_matrix(spatial)
    a = np.asarray(endmembers, dtype=float)
    f = np.asarray(spectral, dtype=float)
    fa = f @ a
    x = a @ abundances
    return 2.0 * (fa.T @ (fa @ abundances - y_ms) + a.T @ ((x @ g) - y_hs) @ g.T)


def _initialize(y_ms, y_hs, f, g, config):
    n = config.materials
    if config.init == "provided":
        if config.init_endmembers is None or config.init_abundances is None:
            raise ValueError("init='provided' needs init_endmembers and init_abundances")
        a0 = np.clip(np.asarray(config.init_endmembers, dtype=float), 0.0, 1.0)
        s0 = project_columns_to_simplex(np.asarray(config.init_abundances, dtype=float))
        return a0, s0
    if config.init == "random":
        rng = np.random.default_rng(config.seed)
        a0 = rng.uniform(0.0, 1.0, size=(y_hs.shape[0], n))
        s0 = project_columns_to_simplex(rng.uniform(0.0, 1.0, size=(n, g.shape[0])))
        return a0, s0
    # pure-pixel: successive projection on the HS image, then a simplex
    # projected least squares fit of the MS image against F @ A0.
    a0 = spa_initialize(y_hs, n)
    fa = f @ a0
    s_ls, *_ = np.linalg.lstsq(fa, y_ms, rcond=None)
    s0 = project_columns_to_simplex(s_ls)
    return a0, s0


def solve_coupled(y_ms, y_hs, spectral, spatial, config):
    """Run the alternating projected descent scheme.

    Every iterate is feasible by construction and the objective trace is
    non-increasing. Stops on the relative objective change, an optional
    absolute objective floor, or the outer iteration cap (the cap is a
    termination reason, not an error).
    """
    y_ms = np.asarray(y_ms, dtype=float)
    y_hs = np.asarray(y_hs, dtype=float)
    f = np.asarray(spectral, dtype=float)
    g = _spatial_matrix(spatial)
    if y_ms.shape[1] != g.shape[0]:
        raise ValueError("MS pixel count does not match the spatial response")
    if y_hs.shape[1] != g.shape[1]:
        raise ValueError("HS pixel count does not match the spatial response")
    if y_hs.shape[0] != f.shape[1]:
        raise ValueError("HS band count does not match the spectral response")

    a, s = _initialize(y_ms, y_hs, f, g, config)

    ftf = f.T @ f
    lip_ftf = _sym_norm(ftf)
    lip_g = _sym_norm(g.T @ g)
    ft_yms = f.T @ y_ms

    def full_objective(a_cur, s_cur):
        x = a_cur @ s_cur
        r1 = y_ms - f @ x
        r2 = y_hs - x @ g
        val = float(np.sum(r1 * r1) + np.sum(r2 * r2))
        if not np.isfinite(val):
            raise RuntimeError("non-finite objective: contaminated input data")
        return val

    f_cur = full_objective(a, s)
    trace = [f_cur]
    termination = "max_iterations"
    iterations = 0
    scale_a = scale_s = 1.0
    # Backtracking probes larger steps each outer pass; the fixed rule
    # sticks to 1/L, which is already a global bound for this quadratic.
    backtracking = config.step_rule == "backtracking"

    for outer in range(1, config.max_outer + 1):
        iterations = outer

        # --- endmember block ---
        sg = s @ g
        sst = s @ s.T
        sg_sgt = sg @ sg.T
        lip_a = 2.0 * (lip_ftf * _sym_norm(sst) + _sym_norm(sg_sgt))
        if lip_a > 0.0:
            ft_yms_st = ft_yms @ s.T
            yhs_sgt = y_hs @ sg.T

            def eval_a(a_new):
                return full_objective(a_new, s)

            if backtracking:
                scale_a = min(scale_a * 2.0, 64.0)
            for _ in range(config.inner_steps):
                grad = 2.0 * (ftf @ a @ sst - ft_yms_st + a @ sg_sgt - yhs_sgt)
                a_new, f_new, scale_a = _descend(
                    a, grad, lip_a, lambda z: np.clip(z, 0.0, 1.0), eval_a,
                    f_cur, scale_a,
                )
                moved = f_new < f_cur or not np.array_equal(a_new, a)
                a, f_cur = a_new, f_new
                if not moved:
                    break

        # --- abundance block ---
        fa = f @ a
        fatfa = fa.T @ fa
        ata = a.T @ a
        lip_s = 2.0 * (_sym_norm(fatfa) + _sym_norm(ata) * lip_g)
        if lip_s > 0.0:
            fat_yms = fa.T @ y_ms
            at_yhs = a.T @ y_hs

            def eval_s(s_new):
                return full_objective(a, s_new)

            if backtracking:
                scale_s = min(scale_s * 2.0, 64.0)
            for _ in range(config.inner_steps):
                grad = 2.0 * (fatfa @ s - fat_yms + ata @ ((s @ g) @ g.T) - at_yhs @ g.T)
                s_new, f_new, scale_s = _descend(
                    s, grad, lip_s, project_columns_to_simplex, eval_s,
                    f_cur, scale_s,
                )
                moved = f_new < f_cur or not np.array_equal(s_new, s)
                s, f_cur = s_new, f_new
                if not moved:
                    break

        prev = trace[-1]
        trace.append(f_cur)
        if f_cur <= config.objective_floor:
            termination = "objective_floor"
            break
        if abs(prev - f_cur) / max(prev, _TINY) < config.rel_tol:
            termination = "converged"
            break

    return Solution(
        endmembers=a,
        abundances=s,
        objective_trace=np.asarray(trace),
        iterations=iterations,
        termination=termination,
    )
