"""Ground-state sudden quenches as a classical film problem.

The overlap amplitude between pre- and post-quench ground states, the
imaginary-time projected matrix element and its free-energy split into bulk,
surface and finite-thickness parts, generalized overlap susceptibilities,
and power-law fitting of the lower edge of the irreversible-work density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    DegenerateGround,
    FitWindowTooNarrow,
    GridTooShort,
    IdentityMismatch,
    NoContinuum,
)
from .spectral_core import (
    GROUND_STATE,
    GROUND_GAP_TOL,
    HermitianOperator,
    QuenchSpec,
    tpm_distribution,
)

# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilmFreeEnergy:
    """Projected imaginary-time amplitude and its free-energy split.

    ``z_samples`` hold the normalized matrix element on ``r_grid``;
    ``f_total = r * bulk + 2 * surface + casimir`` reconstructs the full
    free-energy density per transverse cell.
    """

    r_grid: np.ndarray
    z_samples: np.ndarray
    transverse_cells: float
    bulk: float
    surface: float
    casimir: np.ndarray

    @property
    def f_total(self) -> np.ndarray:
        return self.r_grid * self.bulk + 2.0 * self.surface + self.casimir

    def fidelity_squared(self) -> float:
        return math.exp(-2.0 * self.transverse_cells * self.surface)


@dataclass(frozen=True)
class SusceptibilityReport:
    """Overlap susceptibilities on a grid of final knob values."""

    orders: tuple[int, ...]
    lambda_f: np.ndarray
    chi: dict[int, np.ndarray]
    fitted_exponent: float
    expected_exponent: float
    alpha_s: float


@dataclass(frozen=True)
class EdgeFit:
    """Result of fitting ``amp * (w - q*m)^(1-a)`` to a density window."""

    weight: float
    amplitude: float
    threshold_multiplier: float
    exponent: float
    mass: float
    window: tuple[float, float]
    residual: float

    @property
    def threshold(self) -> float:
        return self.threshold_multiplier * self.mass


# ---------------------------------------------------------------------------
# overlap and persistence amplitude
# ---------------------------------------------------------------------------


def _require_unique_ground(h: HermitianOperator, label: str) -> None:
    if h.dim > 1 and h.ground_gap < GROUND_GAP_TOL:
        raise DegenerateGround(f"{label} ground state degenerate (gap {h.ground_gap:.2e})")


def ground_fidelity(h0: HermitianOperator, hf: HermitianOperator,
                    check_distribution: bool = True) -> float:
    """Overlap magnitude of the two ground states.

    Cross-checks that the squared value equals the weight of the lowest work
    atom of the ground-state sudden quench; a disagreement indicates an
    implementation bug and raises :class:`IdentityMismatch`.
    """
    _require_unique_ground(h0, "initial")
    _require_unique_ground(hf, "final")
    fid = float(abs(np.vdot(hf.ground_state, h0.ground_state)))
    if check_distribution:
        d = tpm_distribution(QuenchSpec(initial=h0, final=hf, beta=GROUND_STATE))
        shift = d.adiabatic_shift
        idx = int(np.argmin(np.abs(d.works - shift)))
        atom_ok = abs(d.works[idx] - shift) <= max(d.merged_tolerance, 1e-12)
        weight = d.probabilities[idx] if atom_ok else 0.0
        if abs(weight - fid * fid) > 1e-10:
            raise IdentityMismatch(
                f"lowest-atom weight {weight!r} != fidelity^2 {fid * fid!r}")
    return fid


def vacuum_persistence(h0: HermitianOperator, hf: HermitianOperator,
                       u_grid: np.ndarray) -> np.ndarray:
    """Amplitude to remain in the pre-quench ground state at time ``u``.

    Equals the characteristic function of the ground-state sudden-quench
    work distribution; the survival probability is its squared modulus.
    """
    _require_unique_ground(h0, "initial")
    overlaps = np.abs(hf.eigenvectors.conj().T @ h0.ground_state) ** 2
    phases = hf.eigenvalues - h0.ground_energy
    u = np.asarray(u_grid, dtype=float)
    return np.exp(1j * np.outer(u, phases)) @ overlaps


def survival_probability(h0: HermitianOperator, hf: HermitianOperator,
                         u_grid: np.ndarray) -> np.ndarray:
    return np.abs(vacuum_persistence(h0, hf, u_grid)) ** 2


# ---------------------------------------------------------------------------
# film partition function
# ---------------------------------------------------------------------------


def film_partition_function(h0: HermitianOperator, hf: HermitianOperator,
                            r_grid: np.ndarray, transverse_cells: float,
                            convergence_tol: float = 1e-6) -> FilmFreeEnergy:
    """Imaginary-time projected amplitude and its free-energy decomposition.

    Evaluated directly in the post-quench eigenbasis with real exponentials;
    sampled real-time data is never continued.  The surface term is the mean
    of ``-ln Z / (2 N)`` over the last fifth of ``r_grid``, guarded by a
    convergence check of ``Z`` against its infinite-thickness limit.

    Raises
    ------
    GridTooShort
        If ``Z(r_max)`` has not converged to within ``convergence_tol``.
    """
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r_grid must be nonnegative and strictly ascending")
    overlaps = np.abs(hf.eigenvectors.conj().T @ h0.ground_state) ** 2
    gaps = hf.eigenvalues - hf.ground_energy
    z = np.exp(-np.outer(r, gaps)) @ overlaps
    z_inf = float(overlaps[0] if hf.dim == 1 else np.sum(overlaps[gaps < GROUND_GAP_TOL]))
    if z_inf <= 0:
        raise DegenerateGround("post-quench ground state orthogonal to the initial one")
    if abs(z[-1] / z_inf - 1.0) > convergence_tol:
        raise GridTooShort(
            f"Z(r_max)/Z_inf = {z[-1] / z_inf!r} not converged within {convergence_tol}")
    n = float(transverse_cells)
    neg_log_z = -np.log(z)
    tail = max(1, int(0.2 * len(r)))
    surface = float(np.mean(neg_log_z[-tail:]) / (2.0 * n))
    bulk = (hf.ground_energy - h0.ground_energy) / n
    casimir = neg_log_z / n - 2.0 * surface
    return FilmFreeEnergy(r_grid=r, z_samples=z, transverse_cells=n,
                          bulk=bulk, surface=surface, casimir=casimir)


# ---------------------------------------------------------------------------
# susceptibilities
# ---------------------------------------------------------------------------


def _central_derivatives(f: Callable[[float], float], x: float, step: float,
                         orders: Sequence[int]) -> dict[int, float]:
    """Central finite differences up to fourth order on a 5-point stencil."""
    s = [f(x + k * step) for k in (-2, -1, 0, 1, 2)]
    out: dict[int, float] = {}
    for n in orders:
        if n == 1:
            out[n] = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * step)
        elif n == 2:
            out[n] = (-s[0] + 16 * s[1] - 30 * s[2] + 16 * s[3] - s[4]) / (12 * step ** 2)
        elif n == 3:
            out[n] = (-s[0] + 2 * s[1] - 2 * s[3] + s[4]) / (2 * step ** 3)
        elif n == 4:
            out[n] = (s[0] - 4 * s[1] + 6 * s[2] - 4 * s[3] + s[4]) / step ** 4
        else:
            raise ValueError("orders up to 4 supported")
    return out


def fidelity_susceptibility(model: Callable[[float], HermitianOperator],
                            lam0: float, lamf_grid: np.ndarray,
                            orders: Sequence[int] = (1, 2),
                            n_cells: float = 1.0,
                            lam_c: float | None = None,
                            nu: float = 1.0, d: int = 1, alpha: float = 0.0,
                            step: float = 1e-3) -> SusceptibilityReport:
    """Generalized overlap susceptibilities over a grid of final knob values.

    ``chi_n = -(1/N) d^n ln F / d lam_f^n`` by central finite differences.
    When ``lam_c`` is given, the order-2 susceptibility is power-law fitted
    against ``|lam_f - lam_c|``; the expected exponent for a conformal
    critical point is ``nu*d - 2``.

    Raises
    ------
    FitWindowTooNarrow
        If fewer than five grid points are supplied.
    """
    if max(orders) > 4:
        raise ValueError("orders above 4 are not supported")
    grid = np.asarray(lamf_grid, dtype=float)
    if len(grid) < 5:
        raise FitWindowTooNarrow(f"need >= 5 grid points, got {len(grid)}")
    h0 = model(lam0)

    def log_f(lamf: float) -> float:
        return math.log(ground_fidelity(h0, model(lamf), check_distribution=False))

    chi: dict[int, list[float]] = {n: [] for n in orders}
    for lamf in grid:
        ders = _central_derivatives(log_f, float(lamf), step, orders)
        for n in orders:
            chi[n].append(-ders[n] / n_cells)
    chi_arr = {n: np.asarray(v) for n, v in chi.items()}

    fitted = math.nan
    if lam_c is not None and 2 in chi_arr:
        x = np.log(np.abs(grid - lam_c))
        y = np.log(np.abs(chi_arr[2]))
        fitted = float(np.polyfit(x, y, 1)[0])
    return SusceptibilityReport(
        orders=tuple(orders), lambda_f=grid, chi=chi_arr,
        fitted_exponent=fitted, expected_exponent=nu * d - 2.0,
        alpha_s=alpha + nu,
    )


def surface_susceptibilities(film_fn: Callable[[float], float], lamf: float,
                             orders: Sequence[int] = (1, 2),
                             step: float = 1e-3) -> dict[int, float]:
    """Knob derivatives of a surface free energy; dual route to
    :func:`fidelity_susceptibility` (``chi_n = d^n f_s / d lam_f^n``)."""
    return _central_derivatives(film_fn, lamf, step, orders)


# ---------------------------------------------------------------------------
# edge fitting
# ---------------------------------------------------------------------------


def fit_edge(w_grid: np.ndarray, density: np.ndarray, mass: float,
             window: tuple[float, float], mode: str = "measure",
             threshold_multiplier: float | None = None,
             exponent: float | None = None,
             delta_weight: float = math.nan) -> EdgeFit:
    """Power-law fit of a broadened irreversible-work density near its edge.

    The model is ``amp * (w - q*mass)^(1-a)`` above the threshold and zero
    below it.  ``measure`` mode fits ``(amp, q, a)`` with a multi-start
    least-squares search; ``verify`` mode fixes ``(q, a)`` and solves for the
    amplitude alone.

    Raises
    ------
    NoContinuum
        If the window carries no density mass (e.g. a null quench).
    """
    w = np.asarray(w_grid, dtype=float)
    rho = np.asarray(density, dtype=float)
    lo, hi = window
    sel = (w >= lo) & (w <= hi)
    if np.count_nonzero(sel) < 8:
        raise FitWindowTooNarrow("fewer than 8 density samples in the fit window")
    ww, dd = w[sel], rho[sel]
    mass_in_window = float(np.trapezoid(np.clip(dd, 0.0, None), ww))
    if mass_in_window < 1e-10:
        raise NoContinuum("no continuum density above the lowest atom in the window")

    def model(log_amp: float, q: float, a: float) -> np.ndarray:
        base = np.where(ww > q * mass, ww - q * mass, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(base > 0, np.exp(log_amp) * base ** (1.0 - a), 0.0)
        return vals

    if mode == "verify":
        if threshold_multiplier is None or exponent is None:
            raise ValueError("verify mode needs threshold_multiplier and exponent")
        base = np.where(ww > threshold_multiplier * mass, ww - threshold_multiplier * mass, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            shape = np.where(base > 0, base ** (1.0 - exponent), 0.0)
        denom = float(shape @ shape)
        amp = float(shape @ dd) / denom if denom > 0 else 0.0
        resid = float(np.sqrt(np.mean((amp * shape - dd) ** 2)))
        return EdgeFit(weight=delta_weight, amplitude=amp,
                       threshold_multiplier=threshold_multiplier, exponent=exponent,
                       mass=mass, window=(lo, hi), residual=resid)
    if mode != "measure":
        raise ValueError(f"unknown mode {mode!r}")

    def residuals(p: np.ndarray) -> np.ndarray:
        return model(p[0], p[1], p[2]) - dd

    q_hi = hi / mass
    best = None
    for q0 in (0.5, 1.0, 1.5, 2.0, 2.5):
        if q0 >= q_hi:
            continue
        for a0 in (-0.5, 0.0, 0.5, 1.0, 1.5):
            guess = [math.log(max(float(np.mean(dd)), 1e-12)), q0, a0]
            res = least_squares(residuals, guess,
                                bounds=([-40.0, 0.0, -4.0], [40.0, q_hi, 4.0]))
            if best is None or res.cost < best.cost:
                best = res
    log_amp, q, a = best.x
    resid = float(np.sqrt(2.0 * best.cost / len(ww)))
    return EdgeFit(weight=delta_weight, amplitude=float(math.exp(log_amp)),
                   threshold_multiplier=float(q), exponent=float(a),
                   mass=mass, window=(lo, hi), residual=resid)
