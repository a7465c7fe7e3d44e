"""
operators.py

Discrete state (SpaceGrid, TimeMesh, Field) and the two integral operators of the mild equation

    GV0(t, x) = int G(t, x - y) V0(y) dy,
    Af(t, x)  = int_0^t int G(t - s, x - y) f(s, y)^{1+eta} dy ds.

Both convolve with cell masses int_{cell} G(tau, y) dy rather than point samples, so singular
profiles (d >= alpha) are handled and total mass is exact up to domain truncation.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

from fracfujita.config import settings
from fracfujita.core.errors import DomainError
from fracfujita.core.kernel import KernelProfile, heat_kernel, interval_mass
from fracfujita.core.specfun import ModelParams

logger = logging.getLogger(__name__)

PANEL_GAUSS_NODES = 4
TABLE_TAU_MIN = 1e-14
TABLE_PER_DECADE = 64
PANEL_BLOCK = 32


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on [-L, L] with an odd number of nodes (x = 0 is the middle node)."""

    half_width: float
    points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise DomainError(f"grid half width must be positive, got {self.half_width}")
        if self.points < 3 or self.points % 2 == 0:
            raise DomainError(f"grid needs an odd number of nodes >= 3, got {self.points}")

    @classmethod
    def with_spacing(cls, half_width: float, dx: float) -> "SpaceGrid":
        cells = int(round(half_width / dx))
        return cls(half_width=cells * dx, points=2 * cells + 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def center(self) -> int:
        return self.points // 2

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    def indicator(self, a: float, b: float) -> np.ndarray:
        """Nodal indicator of [a, b]; nodes on the boundary carry 1/2 so the trapezoid mass is b - a."""
        x = self.x
        tol = 1e-9 * self.dx
        values = ((x > a + tol) & (x < b - tol)).astype(float)
        values[np.abs(x - a) <= tol] = 0.5
        values[np.abs(x - b) <= tol] = 0.5
        return values

    def describe(self) -> dict:
        return {"half_width": self.half_width, "points": self.points, "dx": self.dx}


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Strictly increasing nodes starting at 0; graded meshes use t_k = T (k/N)^r."""

    nodes: np.ndarray
    grading: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise DomainError("time mesh must start at 0 and be strictly increasing")
        if self.grading < 1.0:
            raise DomainError(f"mesh grading exponent must be >= 1, got {self.grading}")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def graded(cls, horizon: float, panels: int, grading: Optional[float] = None) -> "TimeMesh":
        grading = grading or settings.mesh_grading
        k = np.arange(panels + 1)
        return cls(nodes=horizon * (k / panels) ** grading, grading=grading)

    @classmethod
    def geometric(cls, horizon: float, panels: int, first: float) -> "TimeMesh":
        """0 followed by `panels` log-spaced nodes from `first` to `horizon`."""
        if not 0.0 < first < horizon:
            raise DomainError("geometric mesh needs 0 < first < horizon")
        return cls(nodes=np.concatenate([[0.0], np.geomspace(first, horizon, panels)]), grading=1.0)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def panels(self) -> int:
        return self.nodes.size - 1

    def refined(self) -> "TimeMesh":
        """Every panel split in two (graded meshes keep their grading law)."""
        if self.grading > 1.0 and np.allclose(self.nodes, TimeMesh.graded(self.horizon, self.panels, self.grading).nodes):
            return TimeMesh.graded(self.horizon, 2 * self.panels, self.grading)
        mids = 0.5 * (self.nodes[1:] + self.nodes[:-1])
        nodes = np.empty(2 * self.nodes.size - 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mids
        return TimeMesh(nodes=nodes, grading=self.grading)

    def describe(self) -> dict:
        return {"panels": self.panels, "horizon": self.horizon, "grading": self.grading}


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a nonnegative function on a SpaceGrid at one time."""

    grid: SpaceGrid
    values: np.ndarray
    time_stamp: float = 0.0
    tail_mass: float = 0.0
    truncated: bool = False
    blown_up: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.points,):
            raise DomainError(f"field has {values.shape} values for a grid of {self.grid.points} nodes")
        if np.any(values < 0):
            raise DomainError("fields must be nonnegative")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: SpaceGrid, time_stamp: float = 0.0) -> "Field":
        return cls(grid=grid, values=np.zeros(grid.points), time_stamp=time_stamp)

    def mass(self) -> float:
        return float(trapezoid(self.values, dx=self.grid.dx))

    def sup(self) -> float:
        return float(np.max(self.values))

    def at(self, time_stamp: float) -> "Field":
        return replace(self, time_stamp=time_stamp)

    def scaled(self, factor: float) -> "Field":
        return replace(self, values=self.values * factor)


@dataclass(frozen=True)
class NormSpec:
    """||V||_{p,theta} = t^theta ||V(t, .)||_{L^p}; p = inf is the sup norm."""

    p: float = np.inf
    theta: float = 0.0

    def __post_init__(self):
        if self.p < 1.0:
            raise DomainError(f"norm exponent must be >= 1, got {self.p}")
        if self.theta < 0.0:
            raise DomainError(f"norm weight must be >= 0, got {self.theta}")

    @classmethod
    def for_fixed_point(cls, params: ModelParams, p: float) -> "NormSpec":
        """theta = (beta d/alpha)(alpha/(beta d eta) - 1/p), requiring (1+eta) theta < 1 and p > q_c."""
        q_c = params.beta * params.dim * params.eta / params.alpha
        if p <= q_c:
            raise DomainError(f"fixed-point norm needs p > q_c = {q_c:.6g}, got p={p}")
        theta = params.decay_rate * (1.0 / (params.decay_rate * params.eta) - 1.0 / p)
        if (1.0 + params.eta) * theta >= 1.0:
            raise DomainError(f"fixed-point weight theta={theta:.6g} violates (1+eta) theta < 1")
        return cls(p=p, theta=theta)


def norm(field: Field, spec: NormSpec) -> float:
    """Trapezoid L^p norm (sup for p = inf), times time_stamp^theta."""
    values = np.abs(field.values)
    if np.isinf(spec.p):
        value = float(np.max(values))
    else:
        value = float(trapezoid(values ** spec.p, dx=field.grid.dx) ** (1.0 / spec.p))
    if spec.theta:
        value *= field.time_stamp ** spec.theta
    return value


# ---------------------------------------------------------------------------
# Cell-averaged kernels and G
# ---------------------------------------------------------------------------

def cell_edges(grid: SpaceGrid):
    """Edges of the 2n - 1 cells [(k - 1/2) dx, (k + 1/2) dx], k = -(n-1) .. n-1."""
    k = np.arange(-(grid.points - 1), grid.points)
    return (k - 0.5) * grid.dx, (k + 0.5) * grid.dx


def cell_kernel(profile: KernelProfile, grid: SpaceGrid, tau) -> np.ndarray:
    """Cell masses of G(tau, .) for one tau (1-d result) or an array of tau (one row each)."""
    lo, hi = cell_edges(grid)
    tau = np.asarray(tau, dtype=float)
    if tau.ndim == 0:
        return np.maximum(interval_mass(profile, tau, lo, hi), 0.0)
    return np.maximum(interval_mass(profile, tau[:, None], lo[None, :], hi[None, :]), 0.0)


def suggest_half_width(profile: KernelProfile, horizon: float, tol: float = 1e-3) -> float:
    """Half width L with predicted lost kernel mass 2 c t^beta L^{-alpha} / alpha below tol at the horizon."""
    params = profile.params
    if params.alpha == 2.0:
        return float(max(1.0, 12.0 * horizon ** params.spread_rate))
    c = profile.tail_constant
    return float((2.0 * c * horizon ** params.beta / (params.alpha * tol)) ** (1.0 / params.alpha))


def apply_G(profile: KernelProfile, v0: Field, t: float) -> Field:
    """
    GV0 at time t: v0 convolved with the cell masses of G(t, .), zero outside [-L, L].

    tail_mass is the fraction of the mass of v0 lost through the domain boundary; above
    settings.truncation_warn the result is flagged as truncated.
    """
    if t <= 0:
        raise DomainError("apply_G requires t > 0")
    grid = v0.grid
    n = grid.points
    kernel = cell_kernel(profile, grid, t)
    out = np.maximum(fftconvolve(v0.values, kernel, mode="full")[n - 1:2 * n - 1], 0.0)
    if not np.any(v0.values):
        out[:] = 0.0
    total = v0.mass()
    tail = max(0.0, 1.0 - float(trapezoid(out, dx=grid.dx)) / total) if total > 0 else 0.0
    truncated = tail > settings.truncation_warn
    if truncated:
        logger.warning(f"apply_G at t={t:.6g}: {100 * tail:.2f}% of the mass left the domain [-L, L]")
    return Field(grid=grid, values=out, time_stamp=t, tail_mass=tail, truncated=truncated)


# ---------------------------------------------------------------------------
# Memory operator A
# ---------------------------------------------------------------------------

class KernelTable:
    """
    Spectra of cell-mass kernels on a log-spaced tau grid.

    Kernels between rows are interpolated linearly in log tau; below TABLE_TAU_MIN the kernel is
    the unit mass in the centre cell. Row spectra are zero-padded to a length that makes the
    circular product equal to the linear convolution.
    """

    def __init__(self, profile: KernelProfile, grid: SpaceGrid, tau_max: float,
                 per_decade: int = TABLE_PER_DECADE, tau_min: float = TABLE_TAU_MIN):
        self.profile = profile
        self.grid = grid
        n = grid.points
        self.size = fft.next_fast_len(3 * n - 2, real=True)
        log_lo, log_hi = np.log(tau_min), np.log(tau_max * (1.0 + 1e-9))
        rows = max(2, int(np.ceil((log_hi - log_lo) / np.log(10.0) * per_decade)) + 1)
        self.log_tau = np.linspace(log_lo, log_hi, rows)
        self.step = self.log_tau[1] - self.log_tau[0]
        self.tau_min = tau_min
        kernels = cell_kernel(profile, grid, np.exp(self.log_tau))
        delta = np.zeros(2 * n - 1)
        delta[n - 1] = 1.0
        # last row is the centre-cell delta used below tau_min
        self.spectra = fft.rfft(np.vstack([kernels, delta]), n=self.size, axis=1)
        self.delta_row = rows
        logger.debug(f"Kernel table: {rows} rows over tau in [{tau_min:.1e}, {tau_max:.4g}], fft size {self.size}")

    def weights(self, tau: np.ndarray):
        """Row indices (..., 2) and interpolation weights (..., 2) for each tau."""
        u = (np.log(np.maximum(tau, self.tau_min)) - self.log_tau[0]) / self.step
        lo = np.clip(np.floor(u).astype(int), 0, self.log_tau.size - 2)
        lam = np.clip(u - lo, 0.0, 1.0)
        rows = np.stack([lo, lo + 1], axis=-1)
        coeff = np.stack([1.0 - lam, lam], axis=-1)
        below = tau < self.tau_min
        rows[below] = self.delta_row
        coeff[below] = (1.0, 0.0)
        return rows, coeff

    def spectrum(self, tau: float) -> np.ndarray:
        rows, coeff = self.weights(np.array([tau]))
        return coeff[0] @ self.spectra[rows[0]]


class MemoryOperator:
    """
    Left-endpoint product integration of A on a growing history.

    `push` stores the spectrum of f(t_j)^{1+eta}; `evaluate(t)` sums, panel by panel in fixed
    order, (t_{j+1} - t_j) times the 4-point Gauss time average of the kernel over the panel.
    """

    def __init__(self, table: KernelTable, eta: float, nonlinear: bool = True):
        self.table = table
        self.eta = eta
        self.nonlinear = nonlinear
        self.times: List[float] = []
        self._spectra = np.empty((16, table.spectra.shape[1]), dtype=complex)
        self.blown_up = False
        nodes, weights = np.polynomial.legendre.leggauss(PANEL_GAUSS_NODES)
        self._gauss = (nodes, weights)

    def __len__(self) -> int:
        return len(self.times)

    def push(self, t: float, values: np.ndarray) -> None:
        if not np.all(np.isfinite(values)):
            self.blown_up = True
        with np.errstate(over="ignore", invalid="ignore"):
            source = values ** (1.0 + self.eta) if self.nonlinear else np.zeros_like(values)
        if not np.all(np.isfinite(source)):
            self.blown_up = True
            source = np.zeros_like(values)
        k = len(self.times)
        if k == self._spectra.shape[0]:
            grown = np.empty((2 * k, self._spectra.shape[1]), dtype=complex)
            grown[:k] = self._spectra
            self._spectra = grown
        self._spectra[k] = fft.rfft(source, n=self.table.size)
        self.times.append(float(t))

    def evaluate(self, t: float) -> Field:
        grid = self.table.grid
        n = grid.points
        if self.blown_up:
            return Field(grid=grid, values=np.full(n, np.inf), time_stamp=t, blown_up=True)
        k = len(self.times)
        if k == 0 or not self.nonlinear:
            return Field.zeros(grid, t)
        left = np.asarray(self.times)
        right = np.append(left[1:], t)
        if right[-1] <= left[-1]:
            raise DomainError("memory operator target time must follow the last history node")
        x, w = self._gauss
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        tau = t - (mid[:, None] + half[:, None] * x[None, :])
        weight = half[:, None] * w[None, :]
        rows, coeff = self.table.weights(tau)
        coeff = (coeff * weight[..., None]).reshape(k, -1)
        rows = rows.reshape(k, -1)
        acc = np.zeros(self.table.spectra.shape[1], dtype=complex)
        history = self._spectra
        for start in range(0, k, PANEL_BLOCK):
            stop = min(k, start + PANEL_BLOCK)
            kernels = np.einsum("jr,jrl->jl", coeff[start:stop], self.table.spectra[rows[start:stop]])
            acc += np.einsum("jl,jl->l", kernels, history[start:stop])
        out = fft.irfft(acc, n=self.table.size)[n - 1:2 * n - 1]
        return Field(grid=grid, values=np.maximum(out, 0.0), time_stamp=t)


def apply_A(profile: KernelProfile, history: Sequence[Field], eta: float,
            table: Optional[KernelTable] = None) -> Field:
    """
    Af at the time stamp of the last history entry.

    history[j] holds f(t_j); panel [t_j, t_{j+1}] uses the left value f(t_j), so the last
    entry only contributes its time stamp.
    """
    if len(history) < 2:
        raise DomainError("apply_A needs at least one panel of history")
    t = history[-1].time_stamp
    if table is None:
        table = KernelTable(profile, history[0].grid, t)
    memory = MemoryOperator(table, eta)
    for f in history[:-1]:
        memory.push(f.time_stamp, f.values)
    return memory.evaluate(t)


# ---------------------------------------------------------------------------
# Measured operator constants
# ---------------------------------------------------------------------------

def semigroup_surrogate(profile: KernelProfile, grid: SpaceGrid, s: float, t: float) -> float:
    """max_x of int G(s, x - y) G(t, y) dy / G(t + s, x) over the grid."""
    v0 = Field(grid=grid, values=heat_kernel(profile, t, grid.x))
    conv = apply_G(profile, v0, s).values
    target = heat_kernel(profile, t + s, grid.x)
    return float(np.max(conv / target))


def source_term_ratio(profile: KernelProfile, grid: SpaceGrid, mesh: TimeMesh, gamma: float, eta: float) -> float:
    """
    max over mesh nodes and grid of int_0^t int G(t-s, x-y) G(s+gamma, y)^{1+eta} dy ds / G(t+gamma, x).

    Bounded in the supercritical regime when d < alpha.
    """
    table = KernelTable(profile, grid, mesh.horizon)
    memory = MemoryOperator(table, eta)
    worst = 0.0
    for j, t in enumerate(mesh.nodes):
        if j > 0:
            value = memory.evaluate(t).values
            worst = max(worst, float(np.max(value / heat_kernel(profile, t + gamma, grid.x))))
        memory.push(t, heat_kernel(profile, t + gamma, grid.x))
    return worst


def young_panel_constant(profile: KernelProfile, f: Field, s: float, t: float, eta: float, p: float, r: float) -> float:
    """
    C in ||P||_r / (t - s) <= C (t - s)^{-(beta d/alpha)((1+eta)/p - 1/r)} ||f||_p^{1+eta}, P being the
    A contribution of the single panel [s, t] with left value f.

    For p = 1 + eta, C <= 1 when r = 1 and C <= (alpha/(alpha - beta d)) G(1, 0) when r = inf (d < alpha).
    """
    mesh_history = [f.at(s), Field.zeros(f.grid, t)]
    contribution = apply_A(profile, mesh_history, eta)
    lhs = norm(contribution, NormSpec(p=r)) / (t - s)
    exponent = profile.params.decay_rate * ((1.0 + eta) / p - 1.0 / r)
    rhs = (t - s) ** (-exponent) * norm(f, NormSpec(p=p)) ** (1.0 + eta)
    return float(lhs / rhs) if rhs > 0 else 0.0
