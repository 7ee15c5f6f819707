"""Linear spectral mixture types and the coupled MS/HS observation operators.

Matrices are dense float64 arrays and columns are the natural unit: an
endmember matrix stacks material signatures as columns (bands x materials),
an abundance matrix stacks per-pixel mixing fractions as columns (materials
x pixels), and images stack spectral pixels as columns (bands x pixels).

The two sensors are modeled by a spectral response F (ms_bands x bands,
applied on the left) and a spatial response G (a collection of pixel
windows with positive weights summing to one, applied on the right).
"""

from dataclasses import dataclass, field

import numpy as np

# Absolute tolerance on simplex membership (column sums, nonnegativity).
# Double precision accumulation over <= 1e4-length columns stays well below.
TAU_SIMPLEX = 1e-9


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------

@dataclass
class Violation:
    """A single invariant violation with its location and magnitude."""

    check: str
    location: str
    magnitude: float
    message: str

    def __str__(self):
        return f"[{self.check}] {self.location}: {self.message} (magnitude {self.magnitude:.3e})"


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    return a


# ---------------------------------------------------------------------------
# Spatial response
# ---------------------------------------------------------------------------

@dataclass
class Window:
    """One output pixel of the spatial decimation: index set plus weights."""

    pixels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.pixels.shape != self.weights.shape:
            raise ValueError("window pixels and weights must have equal length")


@dataclass
class SpatialResponse:
    """Blur-and-downsample response: one weighted pixel window per HS pixel."""

    sr_pixel_count: int
    windows: list[Window] = field(default_factory=list)

    @property
    def hs_pixel_count(self):
        return len(self.windows)

    def to_dense(self):
        """Dense (sr_pixel_count x hs_pixel_count) matrix view."""
        g = np.zeros((self.sr_pixel_count, self.hs_pixel_count))
        for i, win in enumerate(self.windows):
            g[win.pixels, i] = win.weights
        return g

    def to_sparse(self):
        """CSC sparse view, convenient for right-multiplication."""
        from scipy import sparse

        rows, cols, vals = [], [], []
        for i, win in enumerate(self.windows):
            rows.extend(win.pixels.tolist())
            cols.extend([i] * len(win.pixels))
            vals.extend(win.weights.tolist())
        return sparse.csc_matrix(
            (vals, (rows, cols)), shape=(self.sr_pixel_count, self.hs_pixel_count)
        )

    def validate(self, tol=TAU_SIMPLEX):
        """List every violated window invariant; empty means valid."""
        out = []
        covered = np.zeros(self.sr_pixel_count, dtype=bool)
        if self.hs_pixel_count >= self.sr_pixel_count:
            out.append(Violation(
                "spatial_size", "windows",
                float(self.hs_pixel_count - self.sr_pixel_count + 1),
                f"hs_pixel_count {self.hs_pixel_count} must be < sr_pixel_count {self.sr_pixel_count}",
            ))
        for i, win in enumerate(self.windows):
            if len(win.pixels) == 0:
                out.append(Violation("window_empty", f"window {i}", 1.0, "empty window"))
                continue
            if win.pixels.min() < 0 or win.pixels.max() >= self.sr_pixel_count:
                out.append(Violation(
                    "window_range", f"window {i}", float(win.pixels.max()),
                    "pixel index out of range",
                ))
                continue
            wmin = float(win.weights.min())
            if wmin <= 0.0:
                out.append(Violation(
                    "window_weight_positive", f"window {i}", wmin,
                    f"weight {wmin} is not strictly positive",
                ))
            gap = abs(float(win.weights.sum()) - 1.0)
            if gap > tol:
                out.append(Violation(
                    "window_weight_sum", f"window {i}", gap,
                    f"weights sum to {win.weights.sum():.12g}, expected 1",
                ))
            covered[win.pixels] = True
        missing = np.flatnonzero(~covered)
        for j in missing:
            out.append(Violation(
                "coverage", f"pixel {int(j)}", 1.0,
                f"SR pixel {int(j)} is not covered by any window",
            ))
        return out


# ---------------------------------------------------------------------------
# Matrix validators
# ---------------------------------------------------------------------------

def validate_endmembers(a, tol=TAU_SIMPLEX):
    """Endmember entries must be reflectances in [0, 1]."""
    a = _as_matrix(a, "endmembers")
    out = []
    low = float(a.min()) if a.size else 0.0
    high = float(a.max()) if a.size else 0.0
    if a.shape[0] < 1 or a.shape[1] < 1:
        out.append(Violation("endmember_shape", "matrix", 0.0, f"degenerate shape {a.shape}"))
    if low < -tol:
        idx = np.unravel_index(int(np.argmin(a)), a.shape)
        out.append(Violation(
            "endmember_range", f"entry {idx}", -low, f"entry {low:.6g} below 0",
        ))
    if high > 1.0 + tol:
        idx = np.unravel_index(int(np.argmax(a)), a.shape)
        out.append(Violation(
            "endmember_range", f"entry {idx}", high - 1.0, f"entry {high:.6g} above 1",
        ))
    return out


def validate_abundances(s, tol=TAU_SIMPLEX):
    """Every abundance column must lie on the unit simplex."""
    s = _as_matrix(s, "abundances")
    out = []
    mins = s.min(axis=0)
    bad = np.flatnonzero(mins < -tol)
    for j in bad:
        out.append(Violation(
            "abundance_nonnegative", f"column {int(j)}", float(-mins[j]),
            f"entry {mins[j]:.6g} below 0",
        ))
    sums = s.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    for j in bad:
        out.append(Violation(
            "abundance_sum", f"column {int(j)}", float(abs(sums[j] - 1.0)),
            f"column sums to {sums[j]:.12g}, expected 1",
        ))
    return out


def validate_spectral(f, tol=0.0):
    """Spectral response rows must be nonnegative with a positive entry each."""
    f = _as_matrix(f, "spectral response")
    out = []
    if f.shape[0] >= f.shape[1]:
        out.append(Violation(
            "spectral_size", "matrix", float(f.shape[0] - f.shape[1] + 1),
            f"ms_bands {f.shape[0]} must be < bands {f.shape[1]}",
        ))
    if f.size and float(f.min()) < -tol:
        idx = np.unravel_index(int(np.argmin(f)), f.shape)
        out.append(Violation(
            "spectral_nonnegative", f"entry {idx}", float(-f.min()),
            f"negative weight {f.min():.6g}",
        ))
    for r in range(f.shape[0]):
        if not (f[r] > tol).any():
            out.append(Violation(
                "spectral_row_empty", f"row {r}", 1.0, "row has no positive entry",
            ))
    return out


# ---------------------------------------------------------------------------
# Scene containers
# ---------------------------------------------------------------------------

@dataclass
class Scene:
    """Ground truth: endmembers, abundances and the product image."""

    endmembers: np.ndarray
    abundances: np.ndarray
    image: np.ndarray

    @classmethod
    def from_factors(cls, endmembers, abundances):
        endmembers = _as_matrix(endmembers, "endmembers")
        abundances = _as_matrix(abundances, "abundances")
        return cls(endmembers, abundances, reconstruct(endmembers, abundances))

    def validate(self, tol=TAU_SIMPLEX):
        out = validate_endmembers(self.endmembers, tol)
        out += validate_abundances(self.abundances, tol)
        resid = self.image - self.endmembers @ self.abundances
        scale = max(1.0, float(np.abs(self.image).max())) if self.image.size else 1.0
        gap = float(np.abs(resid).max()) if resid.size else 0.0
        if gap > 1e-12 * scale:
            out.append(Violation(
                "scene_product", "image", gap,
                "image differs from endmembers @ abundances",
            ))
        return out


@dataclass
class ObservedPair:
    """The co-registered observation pair: MS image and HS image."""

    ms: np.ndarray
    hs: np.ndarray

    def validate(self, spectral, spatial):
        """Check dimensional consistency against the two responses."""
        out = []
        f = _as_matrix(spectral, "spectral response")
        if self.ms.shape[0] != f.shape[0]:
            out.append(Violation(
                "observed_ms_bands", "ms", 0.0,
                f"MS image has {self.ms.shape[0]} bands, response produces {f.shape[0]}",
            ))
        if self.hs.shape[0] != f.shape[1]:
            out.append(Violation(
                "observed_hs_bands", "hs", 0.0,
                f"HS image has {self.hs.shape[0]} bands, response expects {f.shape[1]}",
            ))
        if self.ms.shape[1] != spatial.sr_pixel_count:
            out.append(Violation(
                "observed_ms_pixels", "ms", 0.0,
                f"MS image has {self.ms.shape[1]} pixels, expected {spatial.sr_pixel_count}",
            ))
        if self.hs.shape[1] != spatial.hs_pixel_count:
            out.append(Violation(
                "observed_hs_pixels", "hs", 0.0,
                f"HS image has {self.hs.shape[1]} pixels, expected {spatial.hs_pixel_count}",
            ))
        return out


# ---------------------------------------------------------------------------
# Forward operators
# ---------------------------------------------------------------------------

def reconstruct(endmembers, abundances):
    """Mix endmembers by abundances: returns endmembers @ abundances.

    The product of a [0,1] matrix with simplex columns stays in [0,1] up to
    rounding; no clipping is applied.
    """
    a = _as_matrix(endmembers, "endmembers")
    s = _as_matrix(abundances, "abundances")
    if a.shape[1] != s.shape[0]:
        raise ValueError(
            f"dimension mismatch: endmembers has {a.shape[1]} columns, "
            f"abundances has {s.shape[0]} rows"
        )
    return a @ s


def spectral_decimate(f, x):
    """Apply the spectral response on the left: returns f @ x.

    Used both to form the MS observation of an image and to decimate an
    endmember matrix to MS resolution.
    """
    f = _as_matrix(f, "spectral response")
    x = _as_matrix(x, "image")
    if f.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: spectral response expects {f.shape[1]} bands, "
            f"image has {x.shape[0]}"
        )
    return f @ x


def spatial_decimate(x, g):
    """Apply the spatial response on the right: column i is X[:, L_i] @ g_i."""
    x = _as_matrix(x, "image")
    if x.shape[1] != g.sr_pixel_count:
        raise ValueError(
            f"dimension mismatch: image has {x.shape[1]} pixels, "
            f"spatial response expects {g.sr_pixel_count}"
        )
    out = np.empty((x.shape[0], g.hs_pixel_count))
    for i, win in enumerate(g.windows):
        out[:, i] = x[:, win.pixels] @ win.weights
    return out


def decimate_abundances(s, g):
    """Spatially decimate an abundance matrix.

    Convex combinations of simplex columns stay on the simplex, so the
    result is the abundance matrix of the HS image. The support of every
    contributing column is contained in the support of the output column.
    """
    s = _as_matrix(s, "abundances")
    return spatial_decimate(s, g)


def validate_model(endmembers, abundances, spectral, spatial, tol=TAU_SIMPLEX):
    """Aggregate every model invariant into a single report.

    Returns a list of Violation records; an empty list means the model is
    valid. Never raises on invalid data.
    """
    out = []
    out += validate_endmembers(endmembers, tol)
    out += validate_abundances(abundances, tol)
    out += validate_spectral(spectral)
    out += spatial.validate(tol)
    a = np.asarray(endmembers, dtype=float)
    s = np.asarray(abundances, dtype=float)
    f = np.asarray(spectral, dtype=float)
    if a.ndim == 2 and s.ndim == 2 and a.shape[1] != s.shape[0]:
        out.append(Violation(
            "shape", "endmembers/abundances", 0.0,
            f"endmembers {a.shape} does not chain with abundances {s.shape}",
        ))
    if a.ndim == 2 and f.ndim == 2 and f.shape[1] != a.shape[0]:
        out.append(Violation(
            "shape", "spectral/endmembers", 0.0,
            f"spectral response {f.shape} does not chain with endmembers {a.shape}",
        ))
    if s.ndim == 2 and s.shape[1] != spatial.sr_pixel_count:
        out.append(Violation(
            "shape", "abundances/spatial", 0.0,
            f"abundances have {s.shape[1]} pixels, spatial response expects "
            f"{spatial.sr_pixel_count}",
        ))
    return out
