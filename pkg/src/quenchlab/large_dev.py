"""Large-deviation analysis of intensive irreversible work.

Excess free energy from the moment generating function of an atomic work
distribution, a grid-scan Legendre-Fenchel transform to the rate function,
duality helpers, and the near-critical scaling collapse of rate curves.

Infinite rate values are represented by ``math.inf`` and serialized as the
string ``"inf"`` by the CLI layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergentMGF, InsufficientCurves, NonConcaveInput
from .spectral_core import WorkDistribution

CONCAVITY_SLACK = 1e-9


@dataclass(frozen=True)
class RateFunctionCurve:
    """Dual pair of excess free energy and rate function samples."""

    r_grid: np.ndarray
    f_ex: np.ndarray
    w_grid: np.ndarray
    rate: np.ndarray
    n_cells: float
    mean_w: float
    surface_limit: float
    boundary_minimizer: np.ndarray

    def rate_at(self, w: float) -> float:
        if w < self.w_grid[0] or w > self.w_grid[-1]:
            return math.inf
        return float(np.interp(w, self.w_grid, self.rate))


# ---------------------------------------------------------------------------
# excess free energy
# ---------------------------------------------------------------------------


def excess_free_energy(d: WorkDistribution, n_cells: float,
                       r_grid: np.ndarray) -> np.ndarray:
    """``-(1/N) ln <e^{-R W_irr}>`` over ``r_grid``, log-sum-exp stabilized.

    ``d`` must come from a ground-state quench so the irreversible work is
    nonnegative; negative ``R`` values are admitted because atomic measures
    keep the sum finite.

    Raises
    ------
    DivergentMGF
        If the stabilized sum overflows anyway (pathological input).
    """
    w_irr = d.irreversible_works()
    if w_irr.min() < -10 * d.merged_tolerance:
        raise ValueError("distribution has atoms below the adiabatic shift")
    r = np.asarray(r_grid, dtype=float)
    x = -np.outer(r, w_irr) + np.log(d.probabilities)[None, :]
    shift = x.max(axis=1)
    log_mgf = shift + np.log(np.exp(x - shift[:, None]).sum(axis=1))
    if not np.all(np.isfinite(log_mgf)):
        raise DivergentMGF("moment generating function overflowed on the grid")
    return -log_mgf / n_cells


# ---------------------------------------------------------------------------
# Legendre-Fenchel transform
# ---------------------------------------------------------------------------


def _check_concave(r: np.ndarray, f: np.ndarray) -> None:
    if len(r) < 3:
        return
    slopes = np.diff(f) / np.diff(r)
    if np.any(np.diff(slopes) > CONCAVITY_SLACK):
        worst = float(np.max(np.diff(slopes)))
        raise NonConcaveInput(f"samples not concave (slope increase {worst:.2e})")


def legendre_fenchel(r_grid: np.ndarray, f_ex: np.ndarray,
                     w_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rate function ``I(w) = -min_R [R w - f_ex(R)]`` by direct grid scan.

    Negative ``w`` maps to ``inf``.  Returns ``(rate, boundary)`` where
    ``boundary`` marks w-points whose minimizer sat on the last grid point,
    i.e. where the returned value is only a lower bound.

    Raises
    ------
    NonConcaveInput
        If the supplied samples are not concave within tolerance.
    """
    r = np.asarray(r_grid, dtype=float)
    f = np.asarray(f_ex, dtype=float)
    w = np.asarray(w_grid, dtype=float)
    _check_concave(r, f)
    rate = np.empty(len(w))
    boundary = np.zeros(len(w), dtype=bool)
    neg = w < 0
    rate[neg] = math.inf
    pos = ~neg
    if np.any(pos):
        objective = np.outer(w[pos], r) - f[None, :]
        idx = objective.argmin(axis=1)
        rate[pos] = -objective[np.arange(idx.size), idx]
        boundary[pos] = idx == (len(r) - 1)
    return rate, boundary


def fenchel_dual_back(w_grid: np.ndarray, rate: np.ndarray,
                      r_grid: np.ndarray) -> np.ndarray:
    """Inverse transform ``f(R) = min_w [R w + I(w)]`` (concave hull)."""
    w = np.asarray(w_grid, dtype=float)
    i_vals = np.asarray(rate, dtype=float)
    finite = np.isfinite(i_vals)
    obj = np.outer(np.asarray(r_grid, dtype=float), w[finite]) + i_vals[None, finite]
    return obj.min(axis=1)


# ---------------------------------------------------------------------------
# full curve
# ---------------------------------------------------------------------------


def default_r_grid(spectral_scale: float, r_max: float = 50.0,
                   n_points: int = 200) -> np.ndarray:
    """Geometric grid from 0, scaled to the problem's energy scale."""
    return np.concatenate([[0.0], np.geomspace(1e-3, r_max, n_points) / spectral_scale])


def rate_function(d: WorkDistribution, n_cells: float,
                  w_grid: np.ndarray | None = None,
                  r_grid: np.ndarray | None = None,
                  surface_limit: float | None = None,
                  max_extensions: int = 12) -> RateFunctionCurve:
    """Rate function of the intensive irreversible work of ``d``.

    Composes :func:`excess_free_energy` with :func:`legendre_fenchel`.
    The ``R`` grid is extended geometrically (and mirrored to negative
    values for ``w`` above the mean) until every requested ``w > 0`` has an
    interior minimizer, so no returned value is a boundary lower bound.
    """
    w_irr = d.irreversible_works()
    mean_w = float((w_irr @ d.probabilities) / n_cells)
    scale = max(float(w_irr.max()), 1e-12) / n_cells
    if w_grid is None:
        w_grid = np.linspace(0.0, 2.0 * max(mean_w, scale), 201)
    w = np.asarray(w_grid, dtype=float)
    if r_grid is None:
        r = default_r_grid(max(scale * n_cells, 1e-12))
    else:
        r = np.asarray(r_grid, dtype=float)
    if np.any(w > mean_w):
        # right tail needs the analytically continued (negative R) branch
        neg = -np.geomspace(r[r > 0].min(), r.max(), len(r) // 2)[::-1]
        r = np.unique(np.concatenate([neg, r]))
    for _ in range(max_extensions):
        f = excess_free_energy(d, n_cells, r)
        rate, boundary = legendre_fenchel(r, f, w)
        hit = boundary & (w > 0)
        if not np.any(hit):
            break
        r = np.unique(np.concatenate([r, np.geomspace(r.max(), 4.0 * r.max(), 40)]))
    fs_limit = surface_limit if surface_limit is not None else float(f[-1])
    return RateFunctionCurve(r_grid=r, f_ex=f, w_grid=w, rate=rate,
                             n_cells=n_cells, mean_w=mean_w,
                             surface_limit=fs_limit,
                             boundary_minimizer=boundary)


def rate_curve_from_samples(r_grid: np.ndarray, f_ex: np.ndarray,
                            w_grid: np.ndarray, n_cells: float,
                            mean_w: float,
                            surface_limit: float) -> RateFunctionCurve:
    """Build a curve from externally computed excess free-energy samples.

    Used by backends (e.g. the free-fermion chain) whose atomic
    distributions are too large to enumerate but whose generating function
    is available in closed form.
    """
    rate, boundary = legendre_fenchel(r_grid, f_ex, w_grid)
    return RateFunctionCurve(r_grid=np.asarray(r_grid, float),
                             f_ex=np.asarray(f_ex, float),
                             w_grid=np.asarray(w_grid, float), rate=rate,
                             n_cells=n_cells, mean_w=mean_w,
                             surface_limit=surface_limit,
                             boundary_minimizer=boundary)


# ---------------------------------------------------------------------------
# scaling collapse
# ---------------------------------------------------------------------------


def casimir_collapse(curves: list[RateFunctionCurve], xis: list[float],
                     d: int = 1, x_window: tuple[float, float] | None = None,
                     n_points: int = 60) -> dict:
    """Rescale rate curves near threshold and report pairwise distances.

    Each curve is mapped to ``x = w * xi^(d+1)``, ``y = (I(w) - 2 f_s) *
    xi^d``; close to the critical point the rescaled curves fall onto a
    single scaling function, so the pairwise sup-distance on a common
    ``x`` window shrinks as the correlation length grows.

    Raises
    ------
    InsufficientCurves
        If fewer than three curves are supplied.
    """
    if len(curves) < 3:
        raise InsufficientCurves(f"need >= 3 curves, got {len(curves)}")
    if len(curves) != len(xis):
        raise ValueError("one correlation length per curve required")
    rescaled = []
    for curve, xi in zip(curves, xis):
        finite = np.isfinite(curve.rate) & (curve.w_grid >= 0)
        x = curve.w_grid[finite] * xi ** (d + 1)
        y = (curve.rate[finite] - curve.surface_limit) * xi ** d
        rescaled.append((x, y))
    lo = max(x[x > 0].min() for x, _ in rescaled)
    hi = min(x.max() for x, _ in rescaled)
    if x_window is not None:
        lo, hi = max(lo, x_window[0]), min(hi, x_window[1])
    if not hi > lo:
        raise ValueError("curves share no common rescaled window")
    xs = np.geomspace(lo, hi, n_points)
    ys = [np.interp(xs, x, y) for x, y in rescaled]
    distances = {}
    for i in range(len(ys)):
        for j in range(i + 1, len(ys)):
            distances[(i, j)] = float(np.max(np.abs(ys[i] - ys[j])))
    return {"x_grid": xs, "rescaled": ys, "pairwise_sup_distance": distances,
            "window": (float(lo), float(hi))}
