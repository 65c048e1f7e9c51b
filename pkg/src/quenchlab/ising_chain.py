"""Exactly solvable transverse-field chain backend.

Convention (frozen against the dense oracle below): ``H(lam) = -sum_j
(sx_j sx_{j+1} + lam * sz_j)`` on a periodic ring of even length L.  The
even-parity sector maps to free fermions with antiperiodic momenta
``k = (2j-1) pi / L``; a ground-state quench excites ``(k, -k)`` pairs
independently, each costing twice the single-mode energy of the final
chain.  Every sign and branch choice here is pinned by requiring exact
agreement with the 2^L dense route at small L.

The critical knob value in this convention is ``LAMBDA_C = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AliasingDetected, DimensionCap, FitWindowTooNarrow
from .quench_ground import SusceptibilityReport

LAMBDA_C = 1.0
ED_SITE_CAP = 12
MODE_CHUNK = 1 << 15


@dataclass(frozen=True)
class BogoliubovModeSet:
    """Free-fermion mode data for one sudden quench of the chain."""

    length: int
    momenta: np.ndarray
    pre_energies: np.ndarray
    post_energies: np.ndarray
    angle_diffs: np.ndarray
    ground_shift: float
    lambda0: float
    lambda_f: float

    @property
    def excitation_probs(self) -> np.ndarray:
        """Pair-excitation probability per positive momentum."""
        return np.sin(self.angle_diffs) ** 2

    @property
    def pair_energies(self) -> np.ndarray:
        """Work carried by one excited pair, per positive momentum."""
        return 2.0 * self.post_energies

    def mass(self) -> float:
        """Single-quasiparticle gap of the final chain."""
        return 2.0 * abs(self.lambda_f - LAMBDA_C)

    def correlation_length(self) -> float:
        return 1.0 / self.mass()

    def spectral_span(self) -> float:
        return 4.0 * float(self.post_energies.max())


@dataclass(frozen=True)
class WorkDensity:
    """Broadened irreversible-work density with its zero-work atom."""

    w_grid: np.ndarray
    density: np.ndarray
    delta_weight: float
    broadening: float

    def total_mass(self) -> float:
        return self.delta_weight + float(np.trapezoid(self.density, self.w_grid))


# ---------------------------------------------------------------------------
# mode data
# ---------------------------------------------------------------------------


def mode_energy(lam: float, k: np.ndarray) -> np.ndarray:
    return 2.0 * np.sqrt(lam * lam - 2.0 * lam * np.cos(k) + 1.0)


def mode_angle(lam: float, k: np.ndarray) -> np.ndarray:
    # branch fixed so the energy above is positive
    return np.arctan2(np.sin(k), lam - np.cos(k))


def build_modes(length: int, lam0: float, lam_f: float) -> BogoliubovModeSet:
    """Mode data for the quench ``lam0 -> lam_f`` on ``length`` sites.

    Parameters
    ----------
    length : int
        Even ring size, ``4 <= length <= 10**6``.
    """
    if length % 2 or not (4 <= length <= 10 ** 6):
        raise ValueError(f"length must be even and in [4, 1e6], got {length}")
    j = np.arange(1, length // 2 + 1)
    k = (2 * j - 1) * np.pi / length
    e_pre = mode_energy(lam0, k)
    e_post = mode_energy(lam_f, k)
    diffs = 0.5 * (mode_angle(lam_f, k) - mode_angle(lam0, k))
    shift = float(np.sum(e_pre) - np.sum(e_post))
    return BogoliubovModeSet(length=length, momenta=k, pre_energies=e_pre,
                             post_energies=e_post, angle_diffs=diffs,
                             ground_shift=shift, lambda0=lam0, lambda_f=lam_f)


def ground_energy(length: int, lam: float) -> float:
    """Ground energy of the chain from the mode sum."""
    j = np.arange(1, length // 2 + 1)
    k = (2 * j - 1) * np.pi / length
    return -float(np.sum(mode_energy(lam, k)))


def log_fidelity(modes: BogoliubovModeSet) -> float:
    return float(np.sum(np.log(np.abs(np.cos(modes.angle_diffs)))))


def fidelity(modes: BogoliubovModeSet) -> float:
    """Ground-state overlap magnitude from the mode product."""
    return math.exp(log_fidelity(modes))


def delta_atom_weight(modes: BogoliubovModeSet) -> float:
    """Probability of the adiabatic (zero irreversible work) outcome."""
    return math.exp(2.0 * log_fidelity(modes))


def surface_free_energy(modes: BogoliubovModeSet) -> float:
    """Surface term of the film free energy, ``-ln F / N`` per boundary."""
    return -log_fidelity(modes) / modes.length


def mean_irreversible_work(modes: BogoliubovModeSet) -> float:
    return float(np.sum(modes.pair_energies * modes.excitation_probs))


def var_irreversible_work(modes: BogoliubovModeSet) -> float:
    p = modes.excitation_probs
    return float(np.sum(modes.pair_energies ** 2 * p * (1.0 - p)))


# ---------------------------------------------------------------------------
# characteristic function
# ---------------------------------------------------------------------------


def _log_g_shifted(modes: BogoliubovModeSet, u: np.ndarray) -> np.ndarray:
    """ln of the zero-referenced amplitude, chunked over modes for large L."""
    c2 = np.cos(modes.angle_diffs) ** 2
    s2 = np.sin(modes.angle_diffs) ** 2
    e2 = modes.pair_energies
    out = np.zeros(len(u), dtype=complex)
    for lo in range(0, len(e2), MODE_CHUNK):
        sl = slice(lo, lo + MODE_CHUNK)
        out += np.log(c2[None, sl] + s2[None, sl]
                      * np.exp(2j * np.outer(u, modes.post_energies[sl]))).sum(axis=1)
    return out


def ising_g_exact(modes: BogoliubovModeSet, u_grid: np.ndarray) -> np.ndarray:
    """Characteristic function of the ground-state quench work distribution.

    Product over positive momenta accumulated in log space, with the
    adiabatic phase restored, so it stays accurate for ``L >> 1``.
    """
    u = np.asarray(u_grid, dtype=float)
    return np.exp(1j * modes.ground_shift * u + _log_g_shifted(modes, u))


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------


def dense_hamiltonian(length: int, lam: float) -> np.ndarray:
    """Full 2^L spin Hamiltonian; verification oracle only."""
    if length > ED_SITE_CAP:
        raise DimensionCap(f"dense route capped at {ED_SITE_CAP} sites")
    dim = 1 << length
    h = np.zeros((dim, dim))
    states = np.arange(dim)
    # field term: sz eigenvalue +1 for bit 0
    popcounts = np.array([bin(s).count("1") for s in states])
    h[states, states] = -lam * (length - 2 * popcounts)
    for j in range(length):
        flip = (1 << j) | (1 << ((j + 1) % length))
        h[states ^ flip, states] -= 1.0
    return h


def even_sector_hamiltonian(length: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Hamiltonian restricted to even spin-flip parity; returns (H, states)."""
    if length > ED_SITE_CAP:
        raise DimensionCap(f"dense route capped at {ED_SITE_CAP} sites")
    dim = 1 << length
    states = np.array([s for s in range(dim) if bin(s).count("1") % 2 == 0])
    index = {int(s): i for i, s in enumerate(states)}
    n = len(states)
    h = np.zeros((n, n))
    popcounts = np.array([bin(int(s)).count("1") for s in states])
    h[np.arange(n), np.arange(n)] = -lam * (length - 2 * popcounts)
    for j in range(length):
        flip = (1 << j) | (1 << ((j + 1) % length))
        for i, s in enumerate(states):
            h[index[int(s) ^ flip], i] -= 1.0
    return h, states


def ed_oracle_g(length: int, lam0: float, lam_f: float, u_grid: np.ndarray,
                sector: str = "even") -> np.ndarray:
    """Characteristic function by brute-force spectral sum at small L.

    ``sector='even'`` restricts to the parity block that carries the ground
    state (exact for this model and much faster); ``sector='full'``
    diagonalizes the whole 2^L space and exists to validate the restriction.
    """
    if length > ED_SITE_CAP:
        raise DimensionCap(f"dense route capped at {ED_SITE_CAP} sites")
    if sector == "even":
        h0, _ = even_sector_hamiltonian(length, lam0)
        hf, _ = even_sector_hamiltonian(length, lam_f)
    elif sector == "full":
        h0 = dense_hamiltonian(length, lam0)
        hf = dense_hamiltonian(length, lam_f)
    else:
        raise ValueError(f"unknown sector {sector!r}")
    w0, v0 = np.linalg.eigh(h0)
    wf, vf = np.linalg.eigh(hf)
    psi0 = v0[:, 0]
    overlaps = np.abs(vf.T.conj() @ psi0) ** 2
    u = np.asarray(u_grid, dtype=float)
    return np.exp(1j * np.outer(u, wf - w0[0])) @ overlaps


def ed_ground_energy(length: int, lam: float) -> float:
    h, _ = even_sector_hamiltonian(length, lam)
    return float(np.linalg.eigvalsh(h)[0])


# ---------------------------------------------------------------------------
# work density by Fourier inversion
# ---------------------------------------------------------------------------


def work_density(modes: BogoliubovModeSet, eta: float, w_grid: np.ndarray,
                 u_max: float | None = None) -> WorkDensity:
    """Broadened density of irreversible work from the mode product.

    The zero-work atom is removed in the frequency domain before inversion
    and reported separately, so the continuum is clean near the origin.
    Inversion uses a Gaussian window of width ``eta`` in work units.

    Raises
    ------
    AliasingDetected
        If the windowed amplitude has not decayed at the end of the
        frequency grid (``u_max`` too small for the requested ``eta``).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    w = np.asarray(w_grid, dtype=float)
    atom = delta_atom_weight(modes)
    mean, std = mean_irreversible_work(modes), math.sqrt(var_irreversible_work(modes))
    period = max(1.3 * (w.max() - min(w.min(), 0.0)), mean + 15.0 * std + 10.0 * eta,
                 modes.spectral_span())
    du = 2.0 * math.pi / period
    if u_max is None:
        u_max = 6.2 / eta
    n_u = int(math.ceil(u_max / du))
    u = du * np.arange(n_u + 1)
    g_shift = np.exp(_log_g_shifted(modes, u))
    window = np.exp(-0.5 * (eta * u) ** 2)
    if abs(g_shift[-1]) * window[-1] > 1e-8:
        raise AliasingDetected(
            f"|g(u_max)|*window = {abs(g_shift[-1]) * window[-1]:.2e} > 1e-8")
    g_cont = (g_shift - atom) * window
    density = np.empty(len(w))
    chunk = max(1, int(2e7) // (n_u + 1))
    for lo in range(0, len(w), chunk):
        sl = slice(lo, lo + chunk)
        phase = np.exp(-1j * np.outer(w[sl], u))
        density[sl] = (du / math.pi) * np.real(phase[:, 1:] @ g_cont[1:]) \
            + (du / (2.0 * math.pi)) * np.real(g_cont[0])
    return WorkDensity(w_grid=w, density=density, delta_weight=atom, broadening=eta)


# ---------------------------------------------------------------------------
# exact binned distribution (independent-mode convolution)
# ---------------------------------------------------------------------------


def binned_work_probabilities(modes: BogoliubovModeSet, coarse_width: float,
                              n_sigma: float = 20.0,
                              fine_bins: int = 600_000) -> tuple[np.ndarray, np.ndarray]:
    """Exact bin masses of the irreversible-work distribution.

    Convolves the independent pair excitations on a fine grid, then rebins
    to ``coarse_width``.  Returns ``(bin_edges, masses)``; masses sum to one
    up to the truncation ``n_sigma`` standard deviations past the mean.
    """
    probs = modes.excitation_probs
    energies = modes.pair_energies
    w_max = mean_irreversible_work(modes) + n_sigma * math.sqrt(var_irreversible_work(modes)) \
        + 2.0 * float(energies.max())
    dw = w_max / fine_bins
    dist = np.zeros(fine_bins)
    dist[0] = 1.0
    for e, p in zip(energies, probs):
        shift = int(round(e / dw))
        nxt = (1.0 - p) * dist
        if shift < fine_bins:
            nxt[shift:] += p * dist[:fine_bins - shift]
        dist = nxt
    per = max(1, int(round(coarse_width / dw)))
    n_coarse = fine_bins // per
    masses = dist[:n_coarse * per].reshape(n_coarse, per).sum(axis=1)
    edges = per * dw * np.arange(n_coarse + 1)
    return edges, masses


# ---------------------------------------------------------------------------
# moment generating function route (consumed by the rate-function module)
# ---------------------------------------------------------------------------


def excess_free_energy(modes: BogoliubovModeSet, r_grid: np.ndarray,
                       derivatives: bool = False):
    """Excess free-energy density ``-(1/N) ln <e^{-R W_irr}>`` from modes.

    Valid for either sign of ``R`` (atomic measure).  With
    ``derivatives=True`` also returns the first and second ``R``
    derivatives, used for saddle-point prefactors.
    """
    r = np.asarray(r_grid, dtype=float)
    c2 = np.cos(modes.angle_diffs) ** 2
    s2 = np.sin(modes.angle_diffs) ** 2
    e2 = modes.pair_energies
    x = -np.outer(r, e2)
    shift = np.maximum(x, 0.0)
    z = np.exp(-shift) * c2[None, :] + np.exp(x - shift) * s2[None, :]
    log_terms = shift + np.log(z)
    f = -log_terms.sum(axis=1) / modes.length
    if not derivatives:
        return f
    p = np.exp(x - shift) * s2[None, :] / z
    f1 = (e2[None, :] * p).sum(axis=1) / modes.length
    f2 = -((e2 ** 2)[None, :] * p * (1.0 - p)).sum(axis=1) / modes.length
    return f, f1, f2


# ---------------------------------------------------------------------------
# susceptibility scan
# ---------------------------------------------------------------------------


def susceptibility_scan(length: int, lam0: float, lamf_grid: np.ndarray,
                        lam_c: float = LAMBDA_C, fd_step: float = 1e-4,
                        nu: float = 1.0, d: int = 1,
                        alpha: float = 0.0) -> SusceptibilityReport:
    """Second overlap susceptibility along a grid of final knob values.

    The log-overlap comes from the mode product; the second derivative uses
    a five-point central stencil.  The grid must sit on one side of the
    critical value, which is an input, not an estimate.
    """
    grid = np.asarray(lamf_grid, dtype=float)
    if len(grid) < 5:
        raise FitWindowTooNarrow(f"need >= 5 grid points, got {len(grid)}")
    if np.any((grid - lam_c) == 0):
        raise ValueError("grid must avoid the critical value itself")

    def log_f(lf: float) -> float:
        return log_fidelity(build_modes(length, lam0, lf))

    chi1 = np.empty(len(grid))
    chi2 = np.empty(len(grid))
    for i, lf in enumerate(grid):
        s = [log_f(lf + k * fd_step) for k in (-2, -1, 0, 1, 2)]
        d1 = (s[0] - 8 * s[1] + 8 * s[3] - s[4]) / (12 * fd_step)
        d2 = (-s[0] + 16 * s[1] - 30 * s[2] + 16 * s[3] - s[4]) / (12 * fd_step ** 2)
        chi1[i] = -d1 / length
        chi2[i] = -d2 / length
    x = np.log(np.abs(grid - lam_c))
    fitted = float(np.polyfit(x, np.log(np.abs(chi2)), 1)[0])
    return SusceptibilityReport(orders=(1, 2), lambda_f=grid,
                                chi={1: chi1, 2: chi2},
                                fitted_exponent=fitted,
                                expected_exponent=nu * d - 2.0,
                                alpha_s=alpha + nu)
