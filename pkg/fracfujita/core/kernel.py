"""
kernel.py

Space-time fractional heat kernel G(t, x) by subordination,

    G(t, x) = int_0^inf p(s, x) f_{E_t}(s) ds,

reduced to the self-similar profile Phi(z) = G(1, z) so that every evaluation is the exact scaling
G(t, x) = t^{-beta d/alpha} Phi(|x| t^{-beta/alpha}).

The profile integral runs over w = log s with composite Gauss-Legendre panels shared by all z, so
a whole z-block costs one matrix-vector product against the subordinator weights M_beta(s) s dw.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.integrate import simpson

from fracfujita.config import settings
from fracfujita.core.errors import DomainError, EnvelopeError, QuadratureError, UnsupportedConfigurationError
from fracfujita.core.specfun import ModelParams, radius, stable_density_radial, wright_m, wright_m_cutoff

logger = logging.getLogger(__name__)

GAUSS_NODES = 16
Z_BLOCK = 64

FINITE = "finite"
LOG_SINGULAR = "log-singular"
POWER_SINGULAR = "power-singular"


def near_origin_tag(params: ModelParams) -> str:
    if params.dim < params.alpha:
        return FINITE
    if params.dim == params.alpha:
        return LOG_SINGULAR
    return POWER_SINGULAR


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * np.pi ** (dim / 2.0) / special.gamma(dim / 2.0)


@dataclass(frozen=True)
class KernelProfile:
    """
    Phi(z) = G(1, z) on a log-spaced grid plus analytic models at both ends.

    near_coeffs holds (Phi(0), A) for Phi(0) - A z^{alpha-d}, (a, b) for a log(1/z) + b, or
    (Phi(z0), d - alpha) for the power singularity; beyond the grid Phi ~ tail_constant z^{-(d+alpha)}.
    """

    params: ModelParams
    grid: np.ndarray
    values: np.ndarray
    near_origin: str
    near_coeffs: Tuple[float, float]
    tail_constant: float
    panels: int = 0
    build_info: dict = field(default_factory=dict, compare=False)

    @property
    def origin_value(self) -> float:
        return self.near_coeffs[0] if self.near_origin == FINITE else np.inf

    def with_params(self, params: ModelParams) -> "KernelProfile":
        """Same profile under a different eta (the kernel does not depend on eta)."""
        return replace(self, params=params)

    @cached_property
    def _interp(self) -> PchipInterpolator:
        return PchipInterpolator(np.log(self.grid), np.log(self.values), extrapolate=False)

    def __call__(self, z) -> np.ndarray:
        z = np.abs(np.asarray(z, dtype=float))
        out = np.empty_like(z)
        z0, z1 = self.grid[0], self.grid[-1]
        inner = z < z0
        outer = z > z1
        mid = ~(inner | outer)
        out[mid] = np.exp(self._interp(np.log(z[mid])))
        out[outer] = self.tail_constant * z[outer] ** (-(self.params.dim + self.params.alpha))
        if np.any(inner):
            out[inner] = self._near_model(z[inner])
        return out

    def _near_model(self, z: np.ndarray) -> np.ndarray:
        c0, c1 = self.near_coeffs
        alpha, dim = self.params.alpha, self.params.dim
        with np.errstate(divide="ignore"):
            if self.near_origin == FINITE:
                return c0 - c1 * z ** (alpha - dim)
            if self.near_origin == LOG_SINGULAR:
                return c0 * np.log(1.0 / z) + c1
            return c0 * (self.grid[0] / z) ** c1

    # ------------------------------------------------------------------ d = 1 cumulative mass

    @cached_property
    def _cumulative(self):
        if self.params.dim != 1:
            raise UnsupportedConfigurationError("cumulative kernel mass is only available in d = 1")
        log_z = np.log(self.grid)
        antiderivative = CubicSpline(log_z, self.values * self.grid).antiderivative()
        head = float(self._near_integral(np.array([self.grid[0]]))[0])
        top = head + float(antiderivative(log_z[-1]) - antiderivative(log_z[0]))
        total = top + self.tail_constant * self.grid[-1] ** (-self.params.alpha) / self.params.alpha
        return antiderivative, head, total

    def _near_integral(self, z: np.ndarray) -> np.ndarray:
        """int_0^z of the near-origin model (d = 1)."""
        c0, c1 = self.near_coeffs
        alpha = self.params.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.near_origin == FINITE:
                return c0 * z - c1 * z ** alpha / alpha
            if self.near_origin == LOG_SINGULAR:
                return np.where(z > 0, c0 * z * (np.log(1.0 / np.maximum(z, 1e-300)) + 1.0) + c1 * z, 0.0)
            # d = 1 > alpha: c0 (z0/y)^{1-alpha} is integrable at 0
            return c0 * self.grid[0] ** c1 * z ** (1.0 - c1) / (1.0 - c1)

    def cumulative(self, z) -> np.ndarray:
        """H(z) = int_0^|z| Phi(y) dy, increasing to one half."""
        antiderivative, head, total = self._cumulative
        z = np.abs(np.asarray(z, dtype=float))
        out = np.empty_like(z)
        z0, z1 = self.grid[0], self.grid[-1]
        inner = z < z0
        outer = z > z1
        mid = ~(inner | outer)
        out[inner] = self._near_integral(z[inner])
        out[mid] = head + antiderivative(np.log(z[mid])) - antiderivative(np.log(z0))
        out[outer] = total - self.tail_constant * z[outer] ** (-self.params.alpha) / self.params.alpha
        return out

    @property
    def half_mass(self) -> float:
        return self._cumulative[2]


# ---------------------------------------------------------------------------
# Profile construction
# ---------------------------------------------------------------------------

def _log_time_limits(params: ModelParams, z_min: float) -> Tuple[float, float]:
    w_max = float(np.log(wright_m_cutoff(params.beta)))
    w_min = params.alpha * np.log(z_min) - 20.0
    if params.dim < params.alpha:
        # Phi(0) integrand behaves like s^{1 - d/alpha} for small s
        w_min = min(w_min, np.log(1e-11) / (1.0 - params.dim / params.alpha))
    return float(w_min), w_max


def _quadrature_rule(beta: float, panels: int, w_min: float, w_max: float):
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    edges = np.linspace(w_min, w_max, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    s = np.exp(nodes)
    return s, weights * s * wright_m(beta, s)


def _subordinate(params: ModelParams, z: np.ndarray, s: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = np.empty(z.size)
    for start in range(0, z.size, Z_BLOCK):
        zb = z[start:start + Z_BLOCK]
        p = stable_density_radial(params.alpha, params.dim, s[None, :], zb[:, None])
        out[start:start + Z_BLOCK] = p @ weights
    return out


def subordinated_value(params: ModelParams, z, panels: int = 256) -> np.ndarray:
    """
    Phi(z) straight from the subordination integral on a fixed panel count (no interpolation).

    Used as the reference the tabulated profile is checked against.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if params.beta == 1.0:
        return stable_density_radial(params.alpha, params.dim, 1.0, z)
    positive = z[z > 0]
    w_min, w_max = _log_time_limits(params, float(positive.min()) if positive.size else 1.0)
    s, weights = _quadrature_rule(params.beta, panels, w_min, w_max)
    return _subordinate(params, z, s, weights)


def origin_value(params: ModelParams) -> float:
    """Phi(0) = p(1, 0) E[E_1^{-d/alpha}] for d < alpha."""
    q = -params.dim / params.alpha
    p0 = float(np.asarray(stable_density_radial(params.alpha, params.dim, 1.0, 0.0)))
    return p0 * special.gamma(1.0 + q) / special.gamma(1.0 + params.beta * q)


def build_kernel_profile(params: ModelParams, quadrature_budget: Optional[int] = None,
                         points: Optional[int] = None) -> KernelProfile:
    """
    Tabulate Phi on `points` log-spaced z in [profile_z_min, profile_z_max].

    Gauss-Legendre panels in log s are doubled until the largest relative change is below
    settings.quadrature_rtol; QuadratureError carries the worst z if the budget runs out.
    """
    budget = quadrature_budget or settings.quadrature_budget
    points = points or settings.profile_points
    z = np.geomspace(settings.profile_z_min, settings.profile_z_max, points)
    logger.info(f"Building kernel profile for alpha={params.alpha}, beta={params.beta}, d={params.dim} "
                f"on {points} points")

    if params.beta == 1.0:
        values = stable_density_radial(params.alpha, params.dim, 1.0, z)
        panels = 0
        rel_change = 0.0
    else:
        w_min, w_max = _log_time_limits(params, z[0])
        panels = settings.quadrature_panels
        previous = None
        while True:
            s, weights = _quadrature_rule(params.beta, panels, w_min, w_max)
            values = _subordinate(params, z, s, weights)
            if previous is not None:
                significant = values > 1e-18 * values.max()
                change = np.zeros_like(values)
                change[significant] = np.abs(values[significant] - previous[significant]) / values[significant]
                worst = int(np.argmax(change))
                rel_change = float(change[worst])
                logger.debug(f"panels={panels}: max relative change {rel_change:.3e} at z={z[worst]:.4g}")
                if rel_change <= settings.quadrature_rtol:
                    break
                if 2 * panels > budget:
                    raise QuadratureError(
                        f"profile quadrature did not reach rtol={settings.quadrature_rtol} within "
                        f"{budget} panels", worst_z=float(z[worst]), rel_change=rel_change)
            previous = values
            panels *= 2

    # Gaussian-type profiles underflow long before z_max
    keep = values > max(1e-300, 1e-18 * values[0]) if params.alpha == 2.0 else values > 1e-300
    z, values = z[keep], values[keep]

    tag = near_origin_tag(params)
    alpha, dim = params.alpha, params.dim
    if tag == FINITE:
        phi0 = origin_value(params)
        near = (phi0, (phi0 - values[0]) / z[0] ** (alpha - dim))
    elif tag == LOG_SINGULAR:
        a = (values[0] - values[1]) / np.log(z[1] / z[0])
        near = (float(a), float(values[0] - a * np.log(1.0 / z[0])))
    else:
        near = (float(values[0]), float(dim - alpha))

    if alpha == 2.0:
        tail_constant = 0.0
    else:
        last_decade = z >= z[-1] / 10.0
        tail_constant = float(np.exp(np.mean(np.log(values[last_decade] * z[last_decade] ** (dim + alpha)))))

    profile = KernelProfile(params=params, grid=z, values=values, near_origin=tag,
                            near_coeffs=(float(near[0]), float(near[1])), tail_constant=tail_constant,
                            panels=panels, build_info={"rel_change": rel_change, "budget": budget})
    logger.info(f"Kernel profile ready: {z.size} points, {panels} panels, near-origin {tag}, "
                f"tail constant {tail_constant:.6g}")
    return profile


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def heat_kernel(profile: KernelProfile, t, x) -> np.ndarray:
    """G(t, x) = t^{-beta d/alpha} Phi(|x| t^{-beta/alpha})."""
    params = profile.params
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("heat_kernel requires t > 0")
    r = radius(x, params.dim)
    return t ** (-params.decay_rate) * profile(r * t ** (-params.spread_rate))


def interval_mass(profile: KernelProfile, t, a, b) -> np.ndarray:
    """int_a^b G(t, y) dy in d = 1, through the profile's cumulative integral."""
    scale = np.asarray(t, dtype=float) ** (-profile.params.spread_rate)
    za = np.asarray(a, dtype=float) * scale
    zb = np.asarray(b, dtype=float) * scale
    return np.sign(zb) * profile.cumulative(zb) - np.sign(za) * profile.cumulative(za)


def profile_mass(profile: KernelProfile) -> float:
    """int_{R^d} Phi, with the near-origin and tail models integrated analytically."""
    params = profile.params
    alpha, dim = params.alpha, params.dim
    z0, z1 = profile.grid[0], profile.grid[-1]
    body = simpson(profile.values * profile.grid ** dim, x=np.log(profile.grid))
    c0, c1 = profile.near_coeffs
    if profile.near_origin == FINITE:
        head = c0 * z0 ** dim / dim - c1 * z0 ** alpha / alpha
    elif profile.near_origin == LOG_SINGULAR:
        head = c0 * z0 ** dim / dim * (np.log(1.0 / z0) + 1.0 / dim) + c1 * z0 ** dim / dim
    else:
        head = c0 * z0 ** dim / alpha
    tail = profile.tail_constant * z1 ** (-alpha) / alpha
    return float(sphere_area(dim) * (head + body + tail))


# ---------------------------------------------------------------------------
# Bound envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundEnvelope:
    lower_constant: float
    upper_constant: float
    regime: str
    argmin: Tuple[float, float]
    argmax: Tuple[float, float]
    samples: int

    @property
    def spread(self) -> float:
        return self.upper_constant / self.lower_constant if self.lower_constant > 0 else np.inf

    def as_dict(self) -> dict:
        return {"lower_constant": self.lower_constant, "upper_constant": self.upper_constant,
                "regime": self.regime, "argmin": list(self.argmin), "argmax": list(self.argmax),
                "samples": self.samples}


def _measure(ratio: np.ndarray, tt: np.ndarray, xx: np.ndarray, mask: np.ndarray, regime: str) -> BoundEnvelope:
    if not np.any(mask):
        raise EnvelopeError("bound envelope test grid has no point inside the asserted regime")
    bad = mask & ~np.isfinite(ratio)
    if np.any(bad):
        i = np.flatnonzero(bad)[0]
        raise EnvelopeError("non-finite envelope ratio", t=float(tt.flat[i]), x=float(xx.flat[i]))
    r = np.where(mask, ratio, np.nan)
    i_min = int(np.nanargmin(r))
    i_max = int(np.nanargmax(r))
    return BoundEnvelope(lower_constant=float(r.flat[i_min]), upper_constant=float(r.flat[i_max]), regime=regime,
                         argmin=(float(tt.flat[i_min]), float(xx.flat[i_min])),
                         argmax=(float(tt.flat[i_max]), float(xx.flat[i_max])), samples=int(mask.sum()))


def bound_envelope(profile: KernelProfile, times, points) -> BoundEnvelope:
    """
    Measured constants of c1 <= G(t, x) / min(t^{-beta d/alpha}, t^beta / |x|^{d+alpha}) <= c2.

    The whole (t, x) product grid is used for d < alpha, otherwise only |x| >= t^{beta/alpha}.
    """
    params = profile.params
    tt, xx = np.meshgrid(np.asarray(times, dtype=float), np.abs(np.asarray(points, dtype=float)), indexing="ij")
    if np.any(tt <= 0):
        raise DomainError("bound envelope needs t > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        envelope = np.minimum(tt ** (-params.decay_rate), tt ** params.beta / xx ** (params.dim + params.alpha))
        ratio = heat_kernel(profile, tt, xx) / envelope
    if params.dim < params.alpha:
        return _measure(ratio, tt, xx, np.ones_like(tt, dtype=bool), "whole-range")
    return _measure(ratio, tt, xx, xx >= tt ** params.spread_rate, "exterior-only")


def log_interior_envelope(profile: KernelProfile, times, points) -> BoundEnvelope:
    """d = alpha interior regime: G(t, x) t^{beta d/alpha} / log(2 / (|x| t^{-beta/alpha})) on 0 < |x| <= t^{beta/alpha}."""
    params = profile.params
    tt, xx = np.meshgrid(np.asarray(times, dtype=float), np.abs(np.asarray(points, dtype=float)), indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = xx * tt ** (-params.spread_rate)
        ratio = heat_kernel(profile, tt, xx) * tt ** params.decay_rate / np.log(2.0 / z)
    return _measure(ratio, tt, xx, (xx > 0) & (z <= 1.0), "interior-log")


def comparability_envelope(profile: KernelProfile, times, points) -> BoundEnvelope:
    """Measured inf / sup of G(t, x) / p(t^beta, x) (finite and positive when d < alpha)."""
    params = profile.params
    tt, xx = np.meshgrid(np.asarray(times, dtype=float), np.abs(np.asarray(points, dtype=float)), indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        ratio = heat_kernel(profile, tt, xx) / stable_density_radial(params.alpha, params.dim, tt ** params.beta, xx)
    return _measure(ratio, tt, xx, np.ones_like(tt, dtype=bool), "comparability")
