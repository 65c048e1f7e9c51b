"""Exact-diagonalization engine for two-point-measurement work statistics.

Builds Gibbs states, sudden/driven work distributions, characteristic
functions, cumulants and entropy-production reports for dense Hermitian
Hamiltonians, together with the thermal sudden-quench identities that relate
average work to free-energy derivatives.

All operations are pure functions of immutable inputs; results are
deterministic and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DecompositionFailure,
    DimensionCap,
    IdentityMismatch,
    NonHermitian,
    OrderCap,
)

#: Sentinel inverse temperature selecting the ground-state (projector) ensemble.
GROUND_STATE = math.inf

HERMITICITY_TOL = 1e-12
GROUND_GAP_TOL = 1e-12
DEFAULT_DIM_CAP = 4096
CUMULANT_ORDER_CAP = 12

# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HermitianOperator:
    """Dense Hermitian matrix with cached spectral decomposition.

    Attributes
    ----------
    matrix : (dim, dim) complex ndarray
        The operator in its original basis.
    eigenvalues : (dim,) float ndarray
        Ascending eigenvalues.
    eigenvectors : (dim, dim) complex ndarray
        Orthonormal eigenvectors as columns, phase-fixed so the
        largest-magnitude component of each column is real positive.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0]) if self.dim > 1 else math.inf

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def spectral_span(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])


@dataclass(frozen=True)
class HamiltonianFamily:
    """Linear family ``H(lam) = base + lam * coupling``."""

    base: HermitianOperator
    coupling: HermitianOperator

    def __post_init__(self) -> None:
        if self.base.dim != self.coupling.dim:
            raise ValueError("base and coupling dimensions disagree")

    @property
    def dim(self) -> int:
        return self.base.dim

    def at(self, lam: float) -> HermitianOperator:
        return eigendecompose(self.base.matrix + lam * self.coupling.matrix)


@dataclass(frozen=True)
class GibbsEnsemble:
    """Thermal (or ground-state) ensemble of a Hermitian operator."""

    hamiltonian: HermitianOperator
    beta: float
    weights: np.ndarray
    partition: float
    free_energy: float
    degenerate_ground: bool = False

    def density_matrix(self) -> np.ndarray:
        v = self.hamiltonian.eigenvectors
        return (v * self.weights) @ v.conj().T


@dataclass(frozen=True)
class QuenchSpec:
    """A two-point-measurement protocol.

    ``propagator`` is the unitary evolving the system between the two
    projective measurements; ``None`` means a sudden quench (identity).
    ``beta`` may be the sentinel :data:`GROUND_STATE`.
    """

    initial: HermitianOperator
    final: HermitianOperator
    beta: float
    propagator: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.initial.dim != self.final.dim:
            raise ValueError("initial and final dimensions disagree")
        if self.propagator is not None:
            u = np.asarray(self.propagator)
            if u.shape != self.initial.matrix.shape:
                raise ValueError("propagator shape mismatch")
            err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
            if err > 1e-10:
                raise ValueError(f"propagator not unitary (deviation {err:.2e})")

    @property
    def sudden(self) -> bool:
        return self.propagator is None


@dataclass(frozen=True)
class WorkDistribution:
    """Finite atomic measure over work values.

    ``works`` are strictly ascending after coalescing values closer than
    ``merged_tolerance``; ``probabilities`` sum to one.
    """

    works: np.ndarray
    probabilities: np.ndarray
    adiabatic_shift: float
    merged_tolerance: float

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.works.tolist(), self.probabilities.tolist()))

    def mean(self) -> float:
        return float(self.works @ self.probabilities)

    def variance(self) -> float:
        m = self.mean()
        return float(((self.works - m) ** 2) @ self.probabilities)

    def irreversible_works(self) -> np.ndarray:
        return self.works - self.adiabatic_shift

    def work_range(self) -> float:
        return float(self.works[-1] - self.works[0]) if len(self.works) > 1 else 0.0


@dataclass(frozen=True)
class EntropyReport:
    """Entropy production and the identities it must satisfy."""

    mean_work: float
    delta_f: float
    s_irr: float
    relative_entropy: float
    trace_distance: float
    jarzynski_residual: float
    cumulants: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------


def eigendecompose(matrix: np.ndarray, hermiticity_tol: float = HERMITICITY_TOL) -> HermitianOperator:
    """Diagonalize a Hermitian matrix with a deterministic phase convention.

    Parameters
    ----------
    matrix : array_like
        Square matrix, Hermitian to within ``hermiticity_tol`` relative to
        its largest-magnitude entry.

    Returns
    -------
    HermitianOperator
        Ascending eigenvalues; each eigenvector's largest-magnitude
        component is made real positive so repeated runs are bit-stable.

    Raises
    ------
    NonHermitian
        If the symmetry violation exceeds tolerance.
    DecompositionFailure
        If the underlying solver does not converge.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonHermitian(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), 1.0)
    herm_err = np.max(np.abs(m - m.conj().T))
    if herm_err > hermiticity_tol * scale:
        raise NonHermitian(f"symmetry violation {herm_err:.3e} exceeds {hermiticity_tol * scale:.3e}")
    m = 0.5 * (m + m.conj().T)
    try:
        evals, evecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DecompositionFailure(str(exc)) from exc
    evecs = _fix_phases(evecs)
    return HermitianOperator(matrix=m, eigenvalues=evals, eigenvectors=evecs)


def _fix_phases(evecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(evecs), axis=0)
    lead = evecs[idx, np.arange(evecs.shape[1])]
    phases = np.where(np.abs(lead) > 0, lead / np.abs(lead), 1.0)
    return evecs / phases[None, :]


def family_from_matrices(base: np.ndarray, coupling: np.ndarray) -> HamiltonianFamily:
    """Build a linear family from raw matrices."""
    return HamiltonianFamily(base=eigendecompose(base), coupling=eigendecompose(coupling))


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> HermitianOperator:
    """Seeded random GUE-like Hermitian operator (used by tests and the CLI)."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return eigendecompose(scale * 0.5 * (a + a.conj().T) / math.sqrt(dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Seeded Haar-like random unitary via phase-fixed QR."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# ensembles and free energies
# ---------------------------------------------------------------------------


def gibbs_state(h: HermitianOperator, beta: float) -> GibbsEnsemble:
    """Gibbs ensemble of ``h`` at inverse temperature ``beta``.

    ``beta = 0`` gives the uniform (infinite-temperature) ensemble,
    ``beta = GROUND_STATE`` the ground-state projector; a degenerate ground
    space (gap below ``GROUND_GAP_TOL``) is then mixed uniformly and
    flagged rather than rejected.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    evals = h.eigenvalues
    degenerate = h.dim > 1 and h.ground_gap < GROUND_GAP_TOL
    if beta == GROUND_STATE:
        weights = np.zeros(h.dim)
        if degenerate:
            sel = evals - evals[0] < GROUND_GAP_TOL
            weights[sel] = 1.0 / np.count_nonzero(sel)
        else:
            weights[0] = 1.0
        return GibbsEnsemble(h, beta, weights, partition=math.nan,
                             free_energy=float(evals[0]), degenerate_ground=degenerate)
    # shift by the minimum eigenvalue so exponentials cannot overflow
    shifted = -beta * (evals - evals[0])
    boltz = np.exp(shifted)
    z_shifted = float(boltz.sum())
    weights = boltz / z_shifted
    log_z = math.log(z_shifted) - beta * evals[0]
    partition = math.exp(log_z) if abs(log_z) < 700 else math.inf
    free_energy = -log_z / beta if beta > 0 else math.nan
    return GibbsEnsemble(h, beta, weights, partition=partition,
                         free_energy=free_energy, degenerate_ground=degenerate)


def log_partition(h: HermitianOperator, beta: float) -> float:
    """ln Z at finite beta, evaluated with the max-weight shift."""
    evals = h.eigenvalues
    shifted = -beta * (evals - evals[0])
    return float(np.log(np.exp(shifted).sum()) - beta * evals[0])


def free_energy(h: HermitianOperator, beta: float) -> float:
    if beta == GROUND_STATE:
        return h.ground_energy
    return -log_partition(h, beta) / beta


def free_energy_difference(h0: HermitianOperator, hf: HermitianOperator, beta: float) -> float:
    """Equilibrium free-energy change between the two operators.

    At the :data:`GROUND_STATE` sentinel this is the ground-energy shift.
    """
    if beta == GROUND_STATE:
        return hf.ground_energy - h0.ground_energy
    if beta <= 0:
        raise ValueError("beta must be positive and finite, or GROUND_STATE")
    return -(log_partition(hf, beta) - log_partition(h0, beta)) / beta


# ---------------------------------------------------------------------------
# work distribution
# ---------------------------------------------------------------------------


def _coalesce(works: np.ndarray, probs: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(works)
    w, p = works[order], probs[order]
    out_w: list[float] = []
    out_p: list[float] = []
    acc_w, acc_p = w[0] * p[0], p[0]
    last = w[0]
    for wi, pi in zip(w[1:], p[1:]):
        if wi - last <= tol:
            acc_w += wi * pi
            acc_p += pi
        else:
            out_w.append(acc_w / acc_p if acc_p > 0 else last)
            out_p.append(acc_p)
            acc_w, acc_p = wi * pi, pi
        last = wi
    out_w.append(acc_w / acc_p if acc_p > 0 else last)
    out_p.append(acc_p)
    return np.asarray(out_w), np.asarray(out_p)


def tpm_distribution(q: QuenchSpec, dim_cap: int = DEFAULT_DIM_CAP,
                     prob_floor: float = 0.0) -> WorkDistribution:
    """Two-point-measurement work distribution of a quench protocol.

    Enumerates every transition ``(n, m)`` weighted by the initial thermal
    occupation and the measured transition probability, then coalesces work
    values that agree within ``1e-11`` of the spectral span.

    Raises
    ------
    DimensionCap
        If the Hilbert-space dimension exceeds ``dim_cap``.
    """
    if q.initial.dim > dim_cap:
        raise DimensionCap(f"dimension {q.initial.dim} exceeds cap {dim_cap}")
    ens = gibbs_state(q.initial, q.beta)
    e0, ef = q.initial.eigenvalues, q.final.eigenvalues
    v0, vf = q.initial.eigenvectors, q.final.eigenvectors
    basis = v0 if q.sudden else q.propagator @ v0
    amp = vf.conj().T @ basis                    # <ef_m|U|e0_n>
    cond = np.abs(amp) ** 2                      # (m, n)
    joint = cond * ens.weights[None, :]
    works = (ef[:, None] - e0[None, :]).ravel()
    probs = joint.ravel()
    keep = probs > prob_floor
    works, probs = works[keep], probs[keep]
    span = q.initial.spectral_span() + q.final.spectral_span()
    tol = 1e-11 * max(span, 1.0)
    works, probs = _coalesce(works, probs, tol)
    return WorkDistribution(
        works=works,
        probabilities=probs,
        adiabatic_shift=float(ef[0] - e0[0]),
        merged_tolerance=tol,
    )


def characteristic_function(d: WorkDistribution, u_grid: np.ndarray) -> np.ndarray:
    """Fourier transform of the work distribution, ``sum_k p_k e^{i u W_k}``."""
    u = np.asarray(u_grid, dtype=float)
    return np.exp(1j * np.outer(u, d.works)) @ d.probabilities


def characteristic_function_trace(q: QuenchSpec, u_grid: np.ndarray) -> np.ndarray:
    """Same object evaluated from the propagator trace formula.

    Independent of :func:`characteristic_function`; used to cross-check the
    atom enumeration.
    """
    ens = gibbs_state(q.initial, q.beta)
    rho = ens.density_matrix()
    v0, vf = q.initial.eigenvectors, q.final.eigenvectors
    e0, ef = q.initial.eigenvalues, q.final.eigenvalues
    u = np.asarray(u_grid, dtype=float)
    out = np.empty(len(u), dtype=complex)
    for i, ui in enumerate(u):
        exp_f = (vf * np.exp(1j * ui * ef)) @ vf.conj().T
        exp_0 = (v0 * np.exp(-1j * ui * e0)) @ v0.conj().T
        if q.sudden:
            out[i] = np.trace(exp_f @ exp_0 @ rho)
        else:
            u_mat = q.propagator
            out[i] = np.trace(u_mat.conj().T @ exp_f @ u_mat @ exp_0 @ rho)
    return out


def cumulants(d: WorkDistribution, max_order: int) -> np.ndarray:
    """Cumulants ``C_1..C_max`` of the work distribution.

    Computed from central moments through the standard recursion; orders
    beyond :data:`CUMULANT_ORDER_CAP` are refused for stability.
    """
    if max_order > CUMULANT_ORDER_CAP:
        raise OrderCap(f"order {max_order} exceeds cap {CUMULANT_ORDER_CAP}")
    if max_order < 1:
        return np.zeros(0)
    mean = d.mean()
    centered = d.works - mean
    # central raw moments m'_n; cumulants of the shifted variable follow the
    # recursion kappa_n = m'_n - sum_j C(n-1, j-1) kappa_j m'_{n-j}
    moments = np.array([np.sum(d.probabilities * centered ** n) for n in range(max_order + 1)])
    kappa = np.zeros(max_order + 1)
    for n in range(1, max_order + 1):
        acc = moments[n]
        for j in range(1, n):
            acc -= math.comb(n - 1, j - 1) * kappa[j] * moments[n - j]
        kappa[n] = acc
    out = kappa[1:].copy()
    out[0] = mean
    return out


def jarzynski_residual(d: WorkDistribution, beta: float, delta_f: float) -> float:
    """``<e^{-beta (W - dF)}> - 1``, evaluated with a log-sum-exp shift."""
    x = -beta * (d.works - delta_f)
    m = float(np.max(x))
    return math.exp(m + math.log(np.sum(d.probabilities * np.exp(x - m)))) - 1.0


# ---------------------------------------------------------------------------
# entropy production
# ---------------------------------------------------------------------------


def entropy_production(q: QuenchSpec, identity_tol: float = 1e-8,
                       cumulant_order: int = 10) -> EntropyReport:
    """Irreversible entropy production of a finite-temperature quench.

    Computes the average work twice (distribution first moment and energy
    change along the driven state), the relative entropy to the
    final-parameter Gibbs state, the trace distance, and the fluctuation
    residual.  The two work routes and the entropy/relative-entropy identity
    must agree within ``identity_tol``; violation raises
    :class:`IdentityMismatch` because it can only come from a bug.
    """
    beta = q.beta
    if not (0 < beta < math.inf):
        raise ValueError("entropy production needs finite positive beta")
    d = tpm_distribution(q)
    mean_from_atoms = d.mean()

    ens0 = gibbs_state(q.initial, beta)
    rho0 = ens0.density_matrix()
    rho_tau = rho0 if q.sudden else q.propagator @ rho0 @ q.propagator.conj().T
    mean_from_trace = float(np.real(np.trace(q.final.matrix @ rho_tau))
                            - np.trace(q.initial.matrix @ rho0).real)
    if abs(mean_from_atoms - mean_from_trace) > identity_tol * max(1.0, abs(mean_from_atoms)):
        raise IdentityMismatch(
            f"mean work routes disagree: {mean_from_atoms!r} vs {mean_from_trace!r}")

    delta_f = free_energy_difference(q.initial, q.final, beta)
    s_irr = beta * (mean_from_atoms - delta_f)

    # D(rho_tau || gibbs_f) = -S(rho_tau) + beta Tr[Hf rho_tau] + ln Zf
    w = ens0.weights[ens0.weights > 0]
    entropy_tau = -float(np.sum(w * np.log(w)))     # unitary invariance
    log_zf = log_partition(q.final, beta)
    rel_entropy = -entropy_tau + beta * float(np.real(np.trace(q.final.matrix @ rho_tau))) + log_zf
    if abs(s_irr - rel_entropy) > identity_tol * max(1.0, abs(s_irr)):
        raise IdentityMismatch(
            f"entropy identity violated: beta(<W>-dF)={s_irr!r} vs D={rel_entropy!r}")

    gibbs_f = gibbs_state(q.final, beta).density_matrix()
    dist = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho_tau - gibbs_f))))
    residual = jarzynski_residual(d, beta, delta_f)
    return EntropyReport(
        mean_work=mean_from_atoms,
        delta_f=delta_f,
        s_irr=s_irr,
        relative_entropy=rel_entropy,
        trace_distance=dist,
        jarzynski_residual=residual,
        cumulants=cumulants(d, cumulant_order),
    )


def entropy_from_cumulant_series(cums: np.ndarray, beta: float) -> float:
    """Alternating cumulant series for the entropy production."""
    total = 0.0
    for n in range(2, len(cums) + 1):
        total += (-1) ** n * beta ** n * cums[n - 1] / math.factorial(n)
    return total


# ---------------------------------------------------------------------------
# thermal sudden-quench identities
# ---------------------------------------------------------------------------


def _free_energy_derivative(fam: HamiltonianFamily, lam: float, beta: float,
                            order: int, step: float) -> float:
    """Central finite difference of F_beta(lam), one Richardson step."""

    def f(x: float) -> float:
        return free_energy(fam.at(x), beta)

    def diff(h: float) -> float:
        if order == 1:
            return (f(lam + h) - f(lam - h)) / (2 * h)
        return (f(lam + h) - 2 * f(lam) + f(lam - h)) / (h * h)

    d1, d2 = diff(step), diff(step / 2)
    return (4 * d2 - d1) / 3


def thermal_sudden_work(fam: HamiltonianFamily, lam0: float, lamf: float,
                        beta: float) -> dict[str, float]:
    """Average sudden-quench work via two routes.

    ``lhs`` is the first moment of the measured distribution, ``rhs`` the
    quench amplitude times the free-energy slope at the initial knob value.
    For a linear family the two are identical up to discretization of the
    derivative.
    """
    if not (0 < beta < math.inf):
        raise ValueError("thermal route needs finite positive beta")
    h0, hf = fam.at(lam0), fam.at(lamf)
    d = tpm_distribution(QuenchSpec(initial=h0, final=hf, beta=beta))
    step = 1e-5 * max(1.0, abs(lam0))
    rhs = (lamf - lam0) * _free_energy_derivative(fam, lam0, beta, order=1, step=step)
    return {"lhs": d.mean(), "rhs": rhs}


def small_quench_entropy_expansion(fam: HamiltonianFamily, lam0: float,
                                   dlams: np.ndarray, beta: float) -> dict:
    """Entropy production versus its quadratic free-energy estimate.

    Returns per-amplitude rows ``(dlam, exact, quadratic, residual)`` plus
    the fitted order of the residual, which must approach 3 for a smooth
    family (cubic remainder of the quadratic expansion).
    """
    if not (0 < beta < math.inf):
        raise ValueError("expansion needs finite positive beta")
    step = 1e-5 * max(1.0, abs(lam0))
    fpp = _free_energy_derivative(fam, lam0, beta, order=2, step=step)
    h0 = fam.at(lam0)
    rows = []
    for dl in np.asarray(dlams, dtype=float):
        if dl == 0.0:
            rows.append((0.0, 0.0, 0.0, 0.0))
            continue
        hf = fam.at(lam0 + dl)
        rep_d = tpm_distribution(QuenchSpec(initial=h0, final=hf, beta=beta))
        delta_f = free_energy_difference(h0, hf, beta)
        exact = beta * (rep_d.mean() - delta_f)
        quad = -0.5 * dl * dl * beta * fpp
        rows.append((float(dl), exact, quad, exact - quad))
    fitted_order = math.nan
    pts = [(abs(r[0]), abs(r[3])) for r in rows if r[0] != 0.0 and abs(r[3]) > 1e-14]
    if len(pts) >= 2:
        x = np.log([p[0] for p in pts])
        y = np.log([p[1] for p in pts])
        fitted_order = float(np.polyfit(x, y, 1)[0])
    return {"rows": rows, "fitted_order": fitted_order}
