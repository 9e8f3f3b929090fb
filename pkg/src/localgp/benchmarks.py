"""Test functions, design generators, and the random 2d path generator.

Everything here is deterministic given its seed and cheap enough to drive
desk-scale experiments.
"""

import math
from dataclasses import dataclass

import numpy as np


def _rows(X, p, name):
    X = np.asarray(X, dtype=float)
    scalar_row = X.ndim == 1
    if scalar_row:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"{name} expects {p}-dimensional inputs")
    return X, scalar_row


def borehole(X):
    """Water flow through a borehole, on unit-cube inputs.

    The eight coordinates map affinely onto the physical ranges
    rw [0.05, 0.15], r [100, 50000], Tu [63070, 115600], Hu [990, 1110],
    Tl [63.1, 116], Hl [700, 820], L [1120, 1680], Kw [9855, 12045],
    and the response is 2 pi Tu (Hu - Hl) / (log(r/rw) m3) with
    m3 = 1 + 2 L Tu / (log(r/rw) rw^2 Kw) + Tu/Tl. Accepts one 8-vector or
    an (n, 8) matrix; rejects anything outside [0, 1].

    Note the r range: 50000, following the widely used benchmark
    parameterization; a narrower r upper bound of 5000 also circulates, and
    the two disagree. This implementation pins 50000.
    """
    X, one = _rows(X, 8, "borehole")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("borehole inputs must lie in the unit cube")
    rw = X[:, 0] * 0.1 + 0.05
    r = X[:, 1] * 49900.0 + 100.0
    Tu = X[:, 2] * 52530.0 + 63070.0
    Hu = X[:, 3] * 120.0 + 990.0
    Tl = X[:, 4] * 52.9 + 63.1
    Hl = X[:, 5] * 120.0 + 700.0
    L = X[:, 6] * 560.0 + 1120.0
    Kw = X[:, 7] * 2190.0 + 9855.0
    m2 = np.log(r / rw)
    m3 = 1.0 + 2.0 * L * Tu / (m2 * rw ** 2 * Kw) + Tu / Tl
    y = 2.0 * math.pi * Tu * (Hu - Hl) / (m2 * m3)
    return float(y[0]) if one else y


def michalewicz(X, M=10):
    """Michalewicz function on [0, pi]^p, steep and anisotropic.

    f(x) = -sum_i sin(x_i) sin(i x_i^2 / pi)^(2M); larger M narrows the
    valleys. Values lie in [-p, 0]. Accepts one p-vector or an (n, p)
    matrix.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    X = np.asarray(X, dtype=float)
    one = X.ndim == 1
    if one:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError("michalewicz expects a vector or a matrix of rows")
    if np.any(X < 0) or np.any(X > math.pi):
        raise ValueError("michalewicz inputs must lie in [0, pi]")
    i = np.arange(1, X.shape[1] + 1)
    y = -(np.sin(X) * np.sin(i * X ** 2 / math.pi) ** (2 * M)).sum(axis=1)
    return float(y[0]) if one else y


def lhs_design(n, p, seed=None):
    """An (n, p) Latin hypercube sample of the unit cube.

    Each dimension gets one point per length-1/n cell, uniformly jittered
    inside it; dimensions are permuted independently.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    rng = np.random.default_rng(seed)
    cols = [(rng.permutation(n) + rng.uniform(size=n)) / n for _ in range(p)]
    return np.column_stack(cols)


def test_function_2d(X):
    """A smooth multi-modal surface for 2d demonstrations on [-2, 2]^2.

    f(x, y) = cos(2x) cos(2y) exp(-(x^2+y^2)/4)
              + cos(3x) exp(-x^2/2) / 2 + cos(3y) exp(-y^2/2) / 2.
    Invented for this package: a sum of damped cosines with value 2 at the
    origin, even in each coordinate, and structure at several scales.
    Accepts one 2-vector or an (n, 2) matrix.
    """
    X, one = _rows(X, 2, "test_function_2d")
    x, y = X[:, 0], X[:, 1]
    out = np.cos(2 * x) * np.cos(2 * y) * np.exp(-(x ** 2 + y ** 2) / 4.0) \
        + 0.5 * np.cos(3 * x) * np.exp(-x ** 2 / 2.0) \
        + 0.5 * np.cos(3 * y) * np.exp(-y ** 2 / 2.0)
    return float(out[0]) if one else out


def product_response_4d(X):
    """Product of two independent 2d surfaces on paired coordinates.

    f(x1..x4) = test_function_2d(x1, x2) * test_function_2d(x3, x4).
    """
    X, one = _rows(X, 4, "product_response_4d")
    out = test_function_2d(X[:, :2]) * test_function_2d(X[:, 2:])
    return float(out[0]) if one else np.asarray(out)


def embed_path(path2d, dims, fill):
    """Lift a 2d path into more dimensions at fixed complementary values.

    Returns a (len(path2d), len(fill)) matrix equal to fill in every row,
    with columns dims[0] and dims[1] replaced by the path coordinates.
    """
    path2d = np.asarray(path2d, dtype=float)
    fill = np.asarray(fill, dtype=float).reshape(-1)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or dims[0] == dims[1]:
        raise ValueError("dims must be two distinct column indices")
    if not all(0 <= d < fill.size for d in dims):
        raise ValueError("dims out of range")
    out = np.tile(fill, (path2d.shape[0], 1))
    out[:, list(dims)] = path2d
    return out


# ==== random 2d paths =======================================================

LINE_TYPES = ("linear", "quadratic", "cubic", "exponential", "natural-log")


def base_curve(line_type, resolution):
    """The unit-scale curve of a line type: resolution points from the origin.

    All five types run from (0, 0) to (1, 1) as y = f(t) over t in [0, 1]:
    t, t^2, t^3, (e^t - 1)/(e - 1), and log(1 + (e - 1) t).
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    t = np.linspace(0.0, 1.0, resolution)
    if line_type == "linear":
        y = t
    elif line_type == "quadratic":
        y = t ** 2
    elif line_type == "cubic":
        y = t ** 3
    elif line_type == "exponential":
        y = (np.exp(t) - 1.0) / (math.e - 1.0)
    elif line_type == "natural-log":
        y = np.log1p((math.e - 1.0) * t)
    else:
        raise ValueError(f"unknown line type {line_type!r}")
    return np.column_stack([t, y])


@dataclass(frozen=True)
class PathSpec:
    """Settings for the random 2d path generator.

    line_type None draws a type uniformly per path; a concrete name forces
    it. transform False skips the random placement entirely and emits bare
    base curves (a hook for structural tests). Scales are drawn from
    scale_range times the rectangle's side lengths, each with a random
    sign, and the shifted curve is redrawn until at least
    min_inside_fraction of its points land inside the rectangle.
    """

    line_type: str | None = None
    resolution: int = 100
    rectangle: tuple = ((-2.0, 2.0), (-2.0, 2.0))
    min_inside_fraction: float = 0.5
    scale_range: tuple = (0.25, 1.0)
    transform: bool = True
    max_attempts: int = 1000

    def __post_init__(self):
        if self.line_type is not None and self.line_type not in LINE_TYPES:
            raise ValueError(f"unknown line type {self.line_type!r}")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if not 0 < self.min_inside_fraction <= 1:
            raise ValueError("min_inside_fraction must be in (0, 1]")
        (x0, x1), (y0, y1) = self.rectangle
        if not (x0 < x1 and y0 < y1):
            raise ValueError("rectangle bounds must be increasing pairs")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must be positive and ordered")


def gen_paths_2d(spec, count, seed=None):
    """count random paths in spec.rectangle; returns (paths, line types).

    Each path draws a line type, then repeatedly draws a scale (per axis: a
    uniform fraction of the side length from spec.scale_range, with random
    sign) and a uniform shift inside the rectangle, keeping the first
    placement where at least spec.min_inside_fraction of the points lie
    inside. Exceeding spec.max_attempts placements raises.
    """
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    (x0, x1), (y0, y1) = spec.rectangle
    wx, wy = x1 - x0, y1 - y0
    lo, hi = spec.scale_range
    paths, kinds = [], []
    for _ in range(count):
        kind = spec.line_type or LINE_TYPES[rng.integers(len(LINE_TYPES))]
        curve = base_curve(kind, spec.resolution)
        if not spec.transform:
            paths.append(curve)
            kinds.append(kind)
            continue
        for attempt in range(spec.max_attempts):
            sx = rng.uniform(lo, hi) * wx * (1 if rng.integers(2) else -1)
            sy = rng.uniform(lo, hi) * wy * (1 if rng.integers(2) else -1)
            cx = rng.uniform(x0, x1)
            cy = rng.uniform(y0, y1)
            cand = np.column_stack([curve[:, 0] * sx + cx,
                                    curve[:, 1] * sy + cy])
            inside = (cand[:, 0] >= x0) & (cand[:, 0] <= x1) & \
                     (cand[:, 1] >= y0) & (cand[:, 1] <= y1)
            if inside.mean() >= spec.min_inside_fraction:
                paths.append(cand)
                kinds.append(kind)
                break
        else:
            raise RuntimeError(
                f"no placement satisfied the inside fraction in "
                f"{spec.max_attempts} attempts")
    return paths, kinds


def grid_2d(side, rectangle=((-2.0, 2.0), (-2.0, 2.0))):
    """A regular side x side grid over the rectangle, row-major rows."""
    if side < 2:
        raise ValueError("side must be at least 2")
    (x0, x1), (y0, y1) = rectangle
    gx = np.linspace(x0, x1, side)
    gy = np.linspace(y0, y1, side)
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    return np.column_stack([GX.ravel(), GY.ravel()])
