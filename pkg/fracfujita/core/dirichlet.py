"""
dirichlet.py

The problem on (-R, R) with zero exterior data: spectral Dirichlet kernel

    G_D(t, x, y) = sum_n E_beta(-nu_n t^beta) phi_n(x) phi_n(y),

modal Galerkin marching of the mild equation, the first-mode functional F(t) = int V phi_1 and the
closed-form comparison ODE G' = s^{-beta(1+eta)} G^{1+eta}.

alpha = 2 uses the exact sine basis; alpha < 2 diagonalises the fractional centred-difference matrix
(h^{-alpha} g_{|i-j|}) on the interior nodes, which is marked approximate.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import linalg, special

from fracfujita.config import settings
from fracfujita.core.errors import DomainError, EigenSolveError
from fracfujita.core.operators import PANEL_GAUSS_NODES, Field, NormSpec, SpaceGrid, TimeMesh, norm
from fracfujita.core.solver import LP_EXPONENTS, SolveTrace, confirm_verdict, crossing_time, growth_step
from fracfujita.core.specfun import ModelParams, mittag_leffler_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """
    First Dirichlet eigenpairs on (-R, R).

    vectors[n] holds phi_{n+1} at the interior nodes of `grid` (the two end nodes are the
    boundary, where every phi vanishes), normalised so that h sum phi_m phi_n = delta_mn.
    """

    alpha: float
    radius: float
    grid: SpaceGrid
    eigenvalues: np.ndarray
    vectors: np.ndarray
    approximate: bool

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def h(self) -> float:
        return self.grid.dx

    @cached_property
    def interior(self) -> np.ndarray:
        return self.grid.x[1:-1]

    def evaluate(self, x) -> np.ndarray:
        """phi_n(x) for all modes, shape (count, len(x)); zero outside (-R, R)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        inside = np.abs(x) < self.radius
        if not self.approximate:
            n = np.arange(1, self.count + 1)[:, None]
            values = np.sin(n * np.pi * (x[None, :] + self.radius) / (2.0 * self.radius)) / np.sqrt(self.radius)
            return np.where(inside[None, :], values, 0.0)
        padded = np.pad(self.vectors, ((0, 0), (1, 1)))
        return np.vstack([np.interp(x, self.grid.x, row, left=0.0, right=0.0) for row in padded])

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """<v, phi_n> for a nodal field including the two boundary nodes."""
        return self.h * (self.vectors @ values[1:-1])

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values of sum_n c_n phi_n, boundary nodes set to 0."""
        values = np.zeros(self.grid.points)
        values[1:-1] = coeffs @ self.vectors
        return values

    def orthonormality_residual(self, modes: Optional[int] = None) -> float:
        modes = modes or self.count
        gram = self.h * self.vectors[:modes] @ self.vectors[:modes].T
        return float(np.max(np.abs(gram - np.eye(modes))))

    def describe(self) -> dict:
        return {"alpha": self.alpha, "radius": self.radius, "interior_points": self.grid.points - 2,
                "modes": self.count, "approximate": self.approximate}


def fractional_difference_weights(alpha: float, count: int) -> np.ndarray:
    """g_k of the centred fractional difference: g_0 = Gamma(alpha+1)/Gamma(alpha/2+1)^2."""
    g = np.empty(count)
    g[0] = special.gamma(alpha + 1.0) / special.gamma(alpha / 2.0 + 1.0) ** 2
    for k in range(count - 1):
        g[k + 1] = (1.0 - (alpha + 1.0) / (alpha / 2.0 + k + 1.0)) * g[k]
    return g


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # first mode positive; every other mode starts positive at its first significant node
    for i, row in enumerate(vectors):
        pivot = np.flatnonzero(np.abs(row) > 1e-8 * np.max(np.abs(row)))[0]
        if (row.sum() if i == 0 else row[pivot]) < 0:
            row *= -1.0
    return vectors


def build_basis(alpha: float, radius: float = 1.0, n_grid: int = 399, n_modes: Optional[int] = None) -> SpectralBasis:
    """
    Dirichlet eigenpairs (nu_n, phi_n) on (-R, R) sampled at `n_grid` interior nodes (odd).

    alpha = 2: nu_n = (n pi / (2R))^2, phi_n = R^{-1/2} sin(n pi (x + R) / (2R)).
    """
    n_modes = n_modes or settings.dirichlet_modes
    if n_modes < 1:
        raise DomainError("basis needs at least one mode")
    if not 0.0 < alpha <= 2.0 or radius <= 0:
        raise DomainError(f"basis needs alpha in (0, 2] and R > 0, got alpha={alpha}, R={radius}")
    if n_grid % 2 == 0 or n_modes > n_grid:
        raise DomainError(f"interior node count must be odd and >= modes, got {n_grid} for {n_modes} modes")
    grid = SpaceGrid(half_width=radius, points=n_grid + 2)
    h = grid.dx
    interior = grid.x[1:-1]

    if alpha == 2.0:
        n = np.arange(1, n_modes + 1)
        eigenvalues = (n * np.pi / (2.0 * radius)) ** 2
        vectors = np.sin(n[:, None] * np.pi * (interior[None, :] + radius) / (2.0 * radius)) / np.sqrt(radius)
        return SpectralBasis(alpha=alpha, radius=radius, grid=grid, eigenvalues=eigenvalues, vectors=vectors,
                             approximate=False)

    logger.info(f"Solving fractional Dirichlet eigenproblem: alpha={alpha}, R={radius}, {n_grid} nodes")
    matrix = linalg.toeplitz(fractional_difference_weights(alpha, n_grid)) * h ** (-alpha)
    try:
        eigenvalues, eigenvectors = linalg.eigh(matrix, subset_by_index=[0, n_modes - 1])
    except (linalg.LinAlgError, ValueError) as e:
        raise EigenSolveError(f"dense eigensolve failed for alpha={alpha}: {e}") from e
    if np.any(np.diff(eigenvalues) <= 0) or eigenvalues[0] <= 0:
        raise EigenSolveError("discrete eigenvalues are not positive and strictly increasing")
    vectors = _fix_signs(np.ascontiguousarray(eigenvectors.T) / np.sqrt(h))
    if np.any(vectors[0] <= 0):
        raise EigenSolveError("first discrete eigenvector changes sign")
    return SpectralBasis(alpha=alpha, radius=radius, grid=grid, eigenvalues=eigenvalues, vectors=vectors,
                         approximate=True)


def kaplan_functional(v, basis: SpectralBasis) -> float:
    """F = int V phi_1 as the discrete inner product on the interior nodes."""
    values = v.values if isinstance(v, Field) else np.asarray(v, dtype=float)
    return float(basis.h * np.dot(values[1:-1], basis.vectors[0]))


def kernel_tail_bound(basis: SpectralBasis, beta: float, t: float) -> float:
    """
    Bound of the discarded modes n > N of G_D(t, x, y), from E_beta(-x) <= 1/(1 + x/Gamma(1+beta))
    and Weyl growth nu_n ~ nu_N (n/N)^alpha; infinite for alpha <= 1.
    """
    if basis.alpha <= 1.0:
        return np.inf
    N = basis.count
    sup_sq = 1.0 / basis.radius if not basis.approximate else float(np.max(basis.vectors ** 2))
    c = basis.eigenvalues[-1] * t ** beta / (special.gamma(1.0 + beta) * N ** basis.alpha)
    return float(sup_sq * N ** (1.0 - basis.alpha) / (c * (basis.alpha - 1.0)))


def dirichlet_kernel(basis: SpectralBasis, beta: float, t: float, x, y, with_bound: bool = False):
    """Truncated spectral sum of G_D(t, x, y); with_bound also returns `kernel_tail_bound`."""
    if t <= 0:
        raise DomainError("dirichlet_kernel requires t > 0")
    weights = mittag_leffler_table(beta)(basis.eigenvalues * t ** beta)
    phi_x = basis.evaluate(x)
    phi_y = basis.evaluate(y)
    value = np.einsum("n,nx,ny->xy", weights, phi_x, phi_y)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        value = float(value[0, 0])
    if with_bound:
        return value, kernel_tail_bound(basis, beta, t)
    return value


# ---------------------------------------------------------------------------
# Marching
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DirichletConfig:
    basis: SpectralBasis
    params: ModelParams
    v0: Field
    mesh: TimeMesh
    blowup_threshold: float = field(default_factory=lambda: settings.blowup_threshold)
    nonlinear: bool = True
    confirm_refinement: bool = True
    step_control: bool = True

    def __post_init__(self):
        if self.v0.grid != self.basis.grid:
            raise DomainError("initial field must live on the basis grid")
        if self.v0.values[0] != 0.0 or self.v0.values[-1] != 0.0:
            raise DomainError("initial data must vanish on the boundary of (-R, R)")
        if self.blowup_threshold <= 0:
            raise DomainError("blow-up threshold must be positive")

    def describe(self) -> dict:
        return {"params": self.params.summary(), "basis": self.basis.describe(), "mesh": self.mesh.describe(),
                "blowup_threshold": self.blowup_threshold, "nonlinear": self.nonlinear,
                "confirm_refinement": self.confirm_refinement, "step_control": self.step_control}


def _dirichlet_once(config: DirichletConfig, mesh: TimeMesh) -> SolveTrace:
    basis = config.basis
    beta, eta = config.params.beta, config.params.eta
    nu = basis.eigenvalues
    ml = mittag_leffler_table(beta)
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(PANEL_GAUSS_NODES)

    c0 = basis.coefficients(config.v0.values)
    times = [0.0]
    coeffs = [c0]
    states = [config.v0.values]
    sources = np.empty((mesh.nodes.size, basis.count))
    count = 0

    def push(values: np.ndarray) -> None:
        nonlocal sources, count
        if count == sources.shape[0]:
            sources = np.vstack([sources, np.empty_like(sources)])
        sources[count] = basis.coefficients(values ** (1.0 + eta)) if config.nonlinear else 0.0
        count += 1

    push(config.v0.values)
    t_prev, sup_prev = 0.0, float(np.max(config.v0.values))
    t_before, sup_before = t_prev, sup_prev
    crossing = None
    i = 1
    while i < mesh.nodes.size:
        t = mesh.nodes[i]
        if config.step_control and config.nonlinear:
            t = min(t, t_prev + growth_step(t_before, sup_before, t_prev, sup_prev))
        c = ml(nu * t ** beta) * c0
        if config.nonlinear:
            left = np.asarray(times)
            right = np.append(left[1:], t)
            half = 0.5 * (right - left)
            tau = t - (0.5 * (right + left))[:, None] - half[:, None] * gauss_x[None, :]
            weight = half[:, None] * gauss_w[None, :]
            kernel = np.einsum("nkg,kg->nk", ml(nu[:, None, None] * tau[None, :, :] ** beta), weight)
            c = c + np.einsum("nk,kn->n", kernel, sources[:count])
        with np.errstate(over="ignore", invalid="ignore"):
            values = np.maximum(basis.synthesize(c), 0.0)
        sup = float(np.max(values)) if np.all(np.isfinite(values)) else np.inf
        times.append(float(t))
        coeffs.append(c)
        states.append(values)
        if sup > config.blowup_threshold:
            crossing = crossing_time(t_prev, sup_prev, t, sup, config.blowup_threshold)
            logger.info(f"Dirichlet sup norm crossed {config.blowup_threshold:.3g} near t={crossing:.6g}")
            break
        push(values)
        t_before, sup_before = t_prev, sup_prev
        t_prev, sup_prev = t, sup
        if t == mesh.nodes[i]:
            i += 1

    times = np.asarray(times)
    states = np.vstack(states)
    modes = np.vstack(coeffs)
    grid = basis.grid
    lp = {p: np.array([norm(Field(grid=grid, values=s), NormSpec(p=p)) if np.all(np.isfinite(s)) else np.inf
                       for s in states]) for p in LP_EXPONENTS}
    return SolveTrace(times=times, sup_norms=np.max(states, axis=1), lp_norms=lp,
                      parabolic_infimum=np.full(times.size, np.nan), verdict="", blowup_time=crossing,
                      states=states, kaplan=modes[:, 0], modes=modes)


def dirichlet_march(config: DirichletConfig) -> SolveTrace:
    """
    Modal product integration of V = G_D V0 + int_0^t G_D(t - s) V(s)^{1+eta} ds.

    The linear part of every mode is E_beta(-nu_n t^beta) c_n(0); the memory term uses the
    4-point Gauss time average of E_beta(-nu_n (t - s)^beta) over each panel with the left-endpoint
    projection of V^{1+eta}. kaplan holds F(t) = c_1(t).
    """
    coarse = _dirichlet_once(config, config.mesh)
    fine = _dirichlet_once(config, config.mesh.refined()) if config.confirm_refinement else None
    trace = confirm_verdict(coarse, fine)
    logger.info(f"Dirichlet march finished: verdict={trace.verdict}, T*={trace.blowup_time}")
    return trace


# ---------------------------------------------------------------------------
# Comparison ODE
# ---------------------------------------------------------------------------

def ode_blowup_time(beta: float, eta: float, K: float) -> Optional[float]:
    """
    Blow-up time of G' = s^{-gamma} G^{1+eta}, gamma = beta (1 + eta).

    gamma < 1 starts from G(0) = K; gamma >= 1 starts from G(1) = K and is finite only when
    1/(eta K^eta) < 1/(gamma - 1). None means no blow-up.
    """
    if K <= 0:
        raise DomainError("comparison ODE needs K > 0")
    if eta <= 0:
        raise DomainError("comparison ODE needs eta > 0")
    gamma = beta * (1.0 + eta)
    budget = 1.0 / (eta * K ** eta)
    if gamma < 1.0:
        return float(((1.0 - gamma) * budget) ** (1.0 / (1.0 - gamma)))
    if gamma == 1.0:
        return float(np.exp(budget))
    if budget >= 1.0 / (gamma - 1.0):
        return None
    return float((1.0 - (gamma - 1.0) * budget) ** (-1.0 / (gamma - 1.0)))


def ode_critical_K(beta: float, eta: float) -> float:
    """Smallest K with finite `ode_blowup_time` when beta(1+eta) > 1; 0 otherwise."""
    gamma = beta * (1.0 + eta)
    if gamma <= 1.0:
        return 0.0
    return float(((gamma - 1.0) / eta) ** (1.0 / eta))


def mittag_leffler_decay_constant(beta: float, nu: float, times) -> float:
    """min over the given times of E_beta(-nu t^beta) t^beta, the c in E_beta(-nu t^beta) >= c / t^beta."""
    times = np.asarray(times, dtype=float)
    return float(np.min(mittag_leffler_table(beta)(nu * times ** beta) * times ** beta))
