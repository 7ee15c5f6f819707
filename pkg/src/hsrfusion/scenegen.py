"""Synthetic scene generation for the coupled MS/HS observation model.

Generated scenes are built to verifiably satisfy the structural conditions
the recovery certificate checks: distinct full-rank endmembers, sparse
decimated abundances, designated pure HS windows, and (optionally, by
rejection sampling) the spectral-dominance condition on the endmembers.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .model import Scene, SpatialResponse, Window, spatial_decimate


@dataclass
class SceneConfig:
    """Parameters of a synthetic scene.

    sr_bands / ms_bands are the SR and MS spectral band counts, width x
    height is the SR pixel grid, factor is the spatial downsampling, and
    max_support caps the number of materials mixed in any region.
    """

    sr_bands: int
    ms_bands: int
    materials: int
    width: int
    height: int
    factor: int
    max_support: int
    kernel: str = "uniform"
    kernel_size: int | None = None
    kernel_var: float = 1.0
    seed: int = 0
    # Reject endmember draws until the spectral-dominance condition holds.
    # Infeasible for large material counts at small band counts; the
    # eligibility part (some band below 1/materials per column) is always
    # enforced so the dominance coefficient stays finite.
    require_dominance: bool = True
    max_draws: int = 10000

    def __post_init__(self):
        if self.ms_bands >= self.sr_bands:
            raise ValueError("ms_bands must be smaller than sr_bands")
        if self.materials < 2:
            raise ValueError("need at least two materials")
        if self.max_support < 1:
            raise ValueError("max_support must be >= 1")
        if self.width % self.factor or self.height % self.factor:
            raise ValueError("factor must divide width and height")
        if self.kernel not in ("uniform", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")

    @property
    def pixel_count(self):
        return self.width * self.height

    @property
    def hs_pixel_count(self):
        return (self.width // self.factor) * (self.height // self.factor)


@dataclass
class GeneratedScene:
    """A scene plus the bookkeeping the generator used to build it."""

    scene: Scene
    spectral: np.ndarray
    spatial: SpatialResponse
    pure_windows: list[int]
    cell_supports: dict[int, tuple[int, ...]]
    seed: int
    draws: int
    acceptance_rate: float


def build_spectral_response(sr_bands, ms_bands):
    """Box-average spectral response: contiguous band blocks, rows sum to 1.

    The blocks partition the SR bands as evenly as possible, the leading
    blocks taking the remainder.
    """
    if ms_bands >= sr_bands:
        raise ValueError("ms_bands must be smaller than sr_bands")
    if ms_bands < 1:
        raise ValueError("ms_bands must be >= 1")
    f = np.zeros((ms_bands, sr_bands))
    base, extra = divmod(sr_bands, ms_bands)
    start = 0
    for r in range(ms_bands):
        size = base + (1 if r < extra else 0)
        f[r, start:start + size] = 1.0 / size
        start += size
    return f


def build_spatial_response(width, height, kernel="uniform", kernel_size=None,
                           variance=1.0, factor=1):
    """Blur-and-downsample response on a width x height pixel grid.

    Each HS pixel is centered on a factor x factor cell; its window is the
    kernel footprint clipped to the image with weights renormalized to sum
    to one. Pixels are indexed row-major (p = row * width + col) and the
    windows come out in row-major cell order.
    """
    if width % factor or height % factor:
        raise ValueError("factor must divide width and height")
    if kernel_size is None:
        kernel_size = factor
    if kernel_size < factor:
        raise ValueError(
            f"kernel size {kernel_size} smaller than factor {factor}: "
            "windows cannot cover the image"
        )
    if kernel not in ("uniform", "gaussian"):
        raise ValueError(f"unknown kernel {kernel!r}")

    def axis_footprint(cell, dim):
        center = cell * factor + (factor - 1) / 2.0
        start = math.ceil(center - kernel_size / 2.0)
        idx = np.arange(start, start + kernel_size)
        keep = (idx >= 0) & (idx < dim)
        return idx[keep], idx[keep] - center

    windows = []
    for cy in range(height // factor):
        ys, dys = axis_footprint(cy, height)
        for cx in range(width // factor):
            xs, dxs = axis_footprint(cx, width)
            if kernel == "uniform":
                w = np.ones((len(ys), len(xs)))
            else:
                w = np.exp(-(dys[:, None] ** 2 + dxs[None, :] ** 2) / (2.0 * variance))
            pixels = (ys[:, None] * width + xs[None, :]).ravel()
            weights = (w / w.sum()).ravel()
            windows.append(Window(pixels=pixels, weights=weights))
    g = SpatialResponse(sr_pixel_count=width * height, windows=windows)
    problems = [v for v in g.validate() if v.check == "coverage"]
    if problems:
        raise ValueError(f"kernel does not cover the image: {problems[0]}")
    return g


def sample_endmembers(config, spectral, rng):
    """Draw a uniform [0,1] endmember matrix by rejection.

    Accepts a draw once it has full column rank, every column has a band
    below 1/materials, the Kruskal rank of its MS decimation is at least
    max_support, and (when required) the dominance coefficient is below
    1/(4 * materials). Returns (matrix, draws).
    """
    n = config.materials
    best_kruskal = min(n, config.ms_bands)
    if config.max_support > best_kruskal:
        raise ValueError(
            f"max_support {config.max_support} cannot be satisfied: the "
            f"Kruskal rank of the decimated endmembers is at most {best_kruskal}"
        )
    threshold = 1.0 / (4.0 * n)
    for draw in range(1, config.max_draws + 1):
        a = rng.uniform(0.0, 1.0, size=(config.sr_bands, n))
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[-1] <= 1e-9 * sv[0]:
            continue
        if not (a < 1.0 / n).any(axis=0).all():
            continue
        if config.require_dominance and bounds.dominance_coefficient(a) >= threshold:
            continue
        if bounds.kruskal_rank(spectral @ a) < config.max_support:
            continue
        return a, draw
    predicted = bounds.dominance_probability(n, config.sr_bands).clamped
    raise RuntimeError(
        f"rejection budget exhausted after {config.max_draws} draws "
        f"(acceptance rate 0.0, predicted dominance rate {predicted:.4g}); "
        "increase max_draws or bands, or disable require_dominance"
    )


def _touched_cells(window, width, factor):
    cols = window.pixels % width
    rows = window.pixels // width
    cells_x = cols // factor
    cells_y = rows // factor
    return set(zip(cells_y.tolist(), cells_x.tolist()))


def _choose_pure_windows(touched, n, hs_count, rng):
    """Pick windows whose zones no other chosen zone's windows can reach.

    zone(i) is the cell set window i touches; reach(i) adds every cell any
    overlapping window touches. A valid placement keeps every zone out of
    every other zone's reach (so no window sees two zones); rings are
    allowed to overlap each other. Greedy over a few seeded orderings.
    """
    reach = []
    for i in range(hs_count):
        r = set(touched[i])
        for j in range(hs_count):
            if j != i and touched[j] & touched[i]:
                r |= touched[j]
        reach.append(r)
    for _ in range(8):
        order = rng.permutation(hs_count)
        chosen = []
        blocked_reach = set()   # cells some chosen zone's windows can touch
        blocked_zones = set()   # cells inside a chosen zone
        for i in order:
            if touched[i] & blocked_reach:
                continue
            if reach[i] & blocked_zones:
                continue
            chosen.append(int(i))
            blocked_reach |= reach[i]
            blocked_zones |= touched[i]
            if len(chosen) == n:
                return chosen, reach
    raise RuntimeError(
        f"could not place {n} isolated pure windows on a "
        f"{hs_count}-window grid; image too small for this kernel"
    )


def generate_scene(config, spatial):
    """Generate a ground-truth scene observed through the given response.

    The construction guarantees, verifiably:
      * the endmember matrix has full column rank and i.i.d. uniform
        entries accepted by rejection sampling (see sample_endmembers);
      * one HS window per material is pure, so the decimated abundances
        contain an exact identity submatrix;
      * supports are assigned per factor x factor cell from a shared pool
        sized by the Kruskal rank of the decimated endmembers, with a
        reduced pool on cells within window reach of a pure zone, so no
        window ever mixes more materials than that rank;
      * mixed-pixel abundances are flat-Dirichlet on their support.
    """
    n = config.materials
    if spatial.sr_pixel_count != config.pixel_count:
        raise ValueError("spatial response does not match the configured pixel grid")
    if n > spatial.hs_pixel_count - n:
        raise ValueError(
            f"need materials <= hs_pixels - materials "
            f"({n} > {spatial.hs_pixel_count - n})"
        )

    rng = np.random.default_rng(config.seed)
    spectral = build_spectral_response(config.sr_bands, config.ms_bands)
    endmembers, draws = sample_endmembers(config, spectral, rng)
    kruskal = bounds.kruskal_rank(spectral @ endmembers)

    width, factor = config.width, config.factor
    hs_count = spatial.hs_pixel_count
    touched = [_touched_cells(w, width, factor) for w in spatial.windows]
    pure_windows, reach = _choose_pure_windows(touched, n, hs_count, rng)

    # Support pools. With kruskal >= materials any union of supports is
    # admissible; otherwise cap the pool at kruskal materials and drop one
    # pool element on ring cells so a window straddling a pure zone stays
    # within the rank budget.
    if kruskal >= n:
        pool = list(range(n))
        ring_pool = pool
    else:
        pool = sorted(rng.choice(n, size=kruskal, replace=False).tolist())
        ring_pool = pool[:-1]

    zone_of = {}
    ring_cells = set()
    for material, win_idx in enumerate(pure_windows):
        for cell in touched[win_idx]:
            zone_of[cell] = material
        ring_cells |= reach[win_idx] - touched[win_idx]
    ring_cells -= set(zone_of)
    if ring_cells and not ring_pool:
        raise RuntimeError(
            "overlapping windows with Kruskal rank 1 cannot isolate pure "
            "zones; use a non-overlapping kernel or more MS bands"
        )

    cells_x = width // factor
    cells_y = config.height // factor
    abundances = np.zeros((n, config.pixel_count))
    cell_supports = {}
    for cy in range(cells_y):
        for cx in range(cells_x):
            cell = (cy, cx)
            cell_idx = cy * cells_x + cx
            if cell in zone_of:
                support = (zone_of[cell],)
            else:
                src = ring_pool if cell in ring_cells else pool
                size = min(config.max_support, len(src))
                support = tuple(sorted(rng.choice(src, size=size, replace=False).tolist()))
            cell_supports[cell_idx] = support
            rows = np.arange(cy * factor, (cy + 1) * factor)
            cols = np.arange(cx * factor, (cx + 1) * factor)
            pix = (rows[:, None] * width + cols[None, :]).ravel()
            if len(support) == 1:
                abundances[support[0], pix] = 1.0
            else:
                draws_d = rng.dirichlet(np.ones(len(support)), size=len(pix))
                abundances[np.array(support)[:, None], pix[None, :]] = draws_d.T

    scene = Scene.from_factors(endmembers, abundances)
    generated = GeneratedScene(
        scene=scene,
        spectral=spectral,
        spatial=spatial,
        pure_windows=pure_windows,
        cell_supports=cell_supports,
        seed=config.seed,
        draws=draws,
        acceptance_rate=1.0 / draws,
    )
    _verify_generated(generated, config, kruskal)
    return generated


def _verify_generated(generated, config, kruskal):
    """Internal consistency checks; a failure here is a generator bug."""
    decimated = spatial_decimate(generated.scene.abundances, generated.spatial)
    for material, win_idx in enumerate(generated.pure_windows):
        col = decimated[:, win_idx]
        target = np.zeros(config.materials)
        target[material] = 1.0
        if np.abs(col - target).max() > 1e-9:
            raise AssertionError(f"pure window {win_idx} is not pure for {material}")
    support_sizes = (np.abs(decimated) > 1e-9).sum(axis=0)
    if int(support_sizes.max()) > kruskal:
        raise AssertionError(
            f"decimated support {int(support_sizes.max())} exceeds Kruskal rank {kruskal}"
        )


def add_noise(y, snr_db, seed=0):
    """Add i.i.d. Gaussian noise rescaled to hit the target SNR exactly.

    The drawn noise is deterministically rescaled so that
    10*log10(|Y|_F^2 / |E|_F^2) equals snr_db. An infinite SNR returns a
    copy of the input.
    """
    y = np.asarray(y, dtype=float)
    if math.isinf(snr_db):
        return y.copy()
    signal = float(np.linalg.norm(y))
    if signal == 0.0:
        raise ValueError("cannot set a finite SNR on an all-zero signal")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(y.shape)
    scale = signal / (float(np.linalg.norm(noise)) * 10.0 ** (snr_db / 20.0))
    return y + scale * noise


def mse(x_true, x_est):
    """Per-element mean squared error: |X_true - X_est|_F^2 / size."""
    a = np.asarray(x_true, dtype=float)
    b = np.asarray(x_est, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2) / a.size)
