"""Numeric verification of the boundary barrier machinery.

Three diagnostics evaluated on a converged solution over the boundary
strip: the strip function h = -d + K3 d^2 must push the linearized
operator above gamma kappa0 (1 + trace F), the sub barrier
P = g (Du.nu + u - phi) - (A + sigma N) h must stay nonnegative, and the
super barrier P-bar (same with +G) must stay nonpositive.  The reports
never abort a solve; they attach to the path report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nconvex import woperator
from nconvex.discretize import (
    DiscreteField,
    Grid,
    SampledProblem,
    gradient_batch,
    hessian_batch,
    robin_residual,
    second_normal_derivative,
)
from nconvex.geometry import (
    DomainSpec,
    _frame_at,
    boundary_samples,
    project_to_boundary_batch,
    strip_mu_max,
)

__all__ = [
    "BarrierParams",
    "HBarrierReport",
    "BarrierReport",
    "recipe_params",
    "verify_h_inequality",
    "verify_sub_barrier",
    "verify_super_barrier",
    "barrier_section",
]


@dataclass(frozen=True)
class BarrierParams:
    """Constants of the barrier construction; see `recipe_params`."""

    k3: float
    beta: float
    cap_a: float
    sigma: float
    mu: float
    gamma: float
    epsilon: float

    def validate(self, domain: DomainSpec):
        if self.k3 <= 0 or self.beta <= 0 or self.cap_a <= 0:
            raise ValueError("K3, beta and A must be positive")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError("sigma must lie in (0, 1]")
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [1/2, 1)")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 1/2)")
        cap = strip_mu_max(domain, self.k3, self.gamma)
        if self.mu > cap * (1.0 + 1e-12):
            raise ValueError(f"strip width mu={self.mu:.4g} exceeds the admissible {cap:.4g}")
        if self.beta * self.mu / 2.0 > self.epsilon * (1.0 + 1e-12):
            raise ValueError("need beta * mu / 2 <= epsilon so that 1 <= g <= 1+epsilon")


def _kappa0_range(domain: DomainSpec):
    """Range of kappa0 = H / (n-1) over the boundary."""
    if domain.is_ball:
        k = 1.0 / domain.radius
        return k, k
    samples = boundary_samples(domain, 4000)
    vals = [s.H / (domain.n - 1) for s in samples]
    return min(vals), max(vals)


def recipe_params(domain: DomainSpec, state, grid: Grid, problem: SampledProblem,
                  gamma: float = 0.5, sigma: float = 0.5,
                  epsilon: float = 0.45) -> BarrierParams:
    """Barrier constants assembled from the computed solution's norms.

    K3 grows like 1/(1 - gamma); beta uses the curvature branch of its
    defining maximum (the alternative branch scales like a power of the
    norm ratio over epsilon and produces strips far below any desk-scale
    grid); A takes the largest of its three lower bounds with the unnamed
    constants estimated numerically from the solution.
    """
    n = domain.n
    k0_min, k0_max = _kappa0_range(domain)
    f_min = float(np.min(problem.f_active))
    f_max = float(np.max(problem.f_active))
    delta0 = 0.5 * (1.0 - gamma)
    k3 = max(
        1.0,
        gamma * k0_max * f_max ** (1.0 / n) / (n * f_min),
        1.0 / ((n - 1) * delta0 * k0_min),
    )
    beta = 4.0 * n * domain.kappa_max_global + 1.0
    mu = min(
        strip_mu_max(domain, k3, gamma),
        2.0 * epsilon / beta,
        epsilon / (2.0 * k3),
    )
    mon = state.monitors
    c1 = 1.0 + mon.sup_u + mon.sup_du
    c2 = (1.0 + mon.sup_u + mon.sup_du) * (1.0 + domain.kappa_max_global) / epsilon
    try:
        resid_sup = _strip_robin_sup(domain, state.field, grid, problem, state.t, mu)
    except ValueError:
        # strip below grid resolution: estimate the core from the boundary
        resid_sup = float(
            np.max(np.abs(robin_residual(state.field, grid, problem, state.t)))
        )
    c3 = (1.0 + epsilon) * resid_sup
    cap_a = max(
        3.0 * beta * c2,
        (beta * c1 + 2.0 * domain.kappa_max_global * n * f_max) / (gamma * k0_min),
        4.0 * c3 / mu,
        1.0,
    )
    params = BarrierParams(k3=k3, beta=beta, cap_a=cap_a, sigma=sigma, mu=mu,
                           gamma=gamma, epsilon=epsilon)
    params.validate(domain)
    return params


def _strip_data(domain: DomainSpec, grid: Grid, mu: float):
    """Projection data for strip active points; errors when the strip is empty."""
    mask = grid.strip_mask(mu)
    if not np.any(mask):
        raise ValueError(
            f"boundary strip of width {mu:.4g} holds no active grid point "
            f"(h = {grid.h:.4g}); refine the grid or widen the strip"
        )
    pts = grid.active_pts[mask]
    d = grid.active_d[mask]
    y, nu, _ = project_to_boundary_batch(domain, pts)
    return mask, pts, d, y, nu


def _extended_data(problem: SampledProblem, pts, nu, t: float):
    """Homotopy boundary datum t phi + (1-t)(x.nu + |x|^2/2) on strip points."""
    if problem.spec is None:
        raise ValueError("barrier verification needs callable problem data")
    quad = np.einsum("ij,ij->i", pts, nu) + 0.5 * np.sum(pts**2, axis=1)
    return t * np.asarray(problem.spec.phi(pts), dtype=float) + (1.0 - t) * quad


def _strip_robin_sup(domain, field: DiscreteField, grid: Grid,
                     problem: SampledProblem, t: float, mu: float) -> float:
    """sup over the strip of |Du.nu + u - phi_t| (the sub/super barrier core)."""
    mask, pts, _, _, nu = _strip_data(domain, grid, mu)
    du = gradient_batch(field, grid)[mask]
    core = np.einsum("ij,ij->i", du, nu) + field.values[mask]
    return float(np.max(np.abs(core - _extended_data(problem, pts, nu, t))))


def _h_quantities(domain: DomainSpec, d, y, nu, k3: float):
    """h, its gradient factor and Hessian at strip points from closed forms."""
    npts = d.size
    n = domain.n
    h_val = -d + k3 * d * d
    hess = np.empty((npts, n, n))
    if domain.is_ball:
        r = domain.radius - d
        dd = -nu
        eye = np.eye(n)
        proj = eye[None, :, :] - dd[:, :, None] * dd[:, None, :]
        d2d = -proj / r[:, None, None]
        hess = (-1.0 + 2.0 * k3 * d)[:, None, None] * d2d \
            + 2.0 * k3 * dd[:, :, None] * dd[:, None, :]
        return h_val, hess
    for idx in range(npts):
        kappa, dirs, _ = _frame_at(domain, y[idx])
        d2d = np.zeros((n, n))
        for k, e in zip(kappa, dirs):
            d2d -= (k / (1.0 - k * d[idx])) * np.outer(e, e)
        dd = -nu[idx]
        hess[idx] = (-1.0 + 2.0 * k3 * d[idx]) * d2d + 2.0 * k3 * np.outer(dd, dd)
    return h_val, hess


def _kappa0_at(domain: DomainSpec, y) -> np.ndarray:
    if domain.is_ball:
        return np.full(y.shape[0], 1.0 / domain.radius)
    out = np.empty(y.shape[0])
    for idx in range(y.shape[0]):
        kappa, _, _ = _frame_at(domain, y[idx])
        out[idx] = float(np.sum(kappa)) / (domain.n - 1)
    return out


@dataclass(frozen=True)
class HBarrierReport:
    """Pointwise check of F^ij h_ij >= gamma kappa0 (1 + trace F)."""

    min_value: float
    violations: int
    strip_points: int

    def as_dict(self):
        return {
            "min_value": self.min_value,
            "violations": self.violations,
            "strip_points": self.strip_points,
        }


def verify_h_inequality(domain: DomainSpec, state, grid: Grid,
                        params: BarrierParams) -> HBarrierReport:
    """Evaluate the strip inequality for h on the solution's linearization."""
    params.validate(domain)
    mask, _, d, y, nu = _strip_data(domain, grid, params.mu)
    d2 = hessian_batch(state.field, grid)[mask]
    m = grid.n - 1
    fij = woperator.batch_linearization(d2, m)
    trace_f = np.trace(fij, axis1=1, axis2=2)
    _, h_hess = _h_quantities(domain, d, y, nu, params.k3)
    contracted = np.einsum("kij,kij->k", fij, h_hess)
    kappa0 = _kappa0_at(domain, y)
    values = contracted - params.gamma * kappa0 * (1.0 + trace_f)
    return HBarrierReport(
        min_value=float(np.min(values)),
        violations=int(np.sum(values < 0.0)),
        strip_points=int(values.size),
    )


@dataclass(frozen=True)
class BarrierReport:
    """Strip/boundary extrema of a barrier plus the implied normal bound."""

    kind: str  # "sub" or "super"
    strip_extreme: float  # min P over the strip, or max P-bar
    boundary_max_abs: float
    strip_points: int
    sup_unn: float
    inf_unn: float
    sigma_n: float
    implied_c: float

    def as_dict(self):
        return {
            "kind": self.kind,
            "strip_extreme": self.strip_extreme,
            "boundary_max_abs": self.boundary_max_abs,
            "strip_points": self.strip_points,
            "sup_unn": self.sup_unn,
            "inf_unn": self.inf_unn,
            "sigma_n": self.sigma_n,
            "implied_c": self.implied_c,
        }


def _barrier_values(domain, state, grid, problem, params, sign: float):
    mask, pts, d, y, nu = _strip_data(domain, grid, params.mu)
    field = state.field
    du = gradient_batch(field, grid)[mask]
    core = (
        np.einsum("ij,ij->i", du, nu)
        + field.values[mask]
        - _extended_data(problem, pts, nu, state.t)
    )
    h_val = -d + params.k3 * d * d
    g = 1.0 - params.beta * h_val
    n_bound = state.monitors.sup_unn
    big_g = (params.cap_a + params.sigma * n_bound) * h_val
    strip_vals = g * core + sign * big_g
    boundary_vals = robin_residual(field, grid, problem, state.t)
    unn = second_normal_derivative(field, grid)
    return strip_vals, boundary_vals, float(np.max(unn)), float(np.min(unn)), n_bound


def verify_sub_barrier(domain: DomainSpec, state, grid: Grid,
                       problem: SampledProblem, params: BarrierParams) -> BarrierReport:
    """P = g (Du.nu + u - phi_t) - G: expected >= 0 in the strip, 0 on the boundary.

    ``implied_c`` is the constant the double-normal bound
    sup u_nunu <= C + sigma N would need, read off the solution.
    """
    params.validate(domain)
    vals, bvals, sup_unn, inf_unn, n_bound = _barrier_values(
        domain, state, grid, problem, params, sign=-1.0
    )
    return BarrierReport(
        kind="sub",
        strip_extreme=float(np.min(vals)),
        boundary_max_abs=float(np.max(np.abs(bvals))),
        strip_points=int(vals.size),
        sup_unn=sup_unn,
        inf_unn=inf_unn,
        sigma_n=params.sigma * n_bound,
        implied_c=sup_unn - params.sigma * n_bound,
    )


def verify_super_barrier(domain: DomainSpec, state, grid: Grid,
                         problem: SampledProblem, params: BarrierParams) -> BarrierReport:
    """P-bar = g (Du.nu + u - phi_t) + G: expected <= 0 in the strip."""
    params.validate(domain)
    vals, bvals, sup_unn, inf_unn, n_bound = _barrier_values(
        domain, state, grid, problem, params, sign=1.0
    )
    return BarrierReport(
        kind="super",
        strip_extreme=float(np.max(vals)),
        boundary_max_abs=float(np.max(np.abs(bvals))),
        strip_points=int(vals.size),
        sup_unn=sup_unn,
        inf_unn=inf_unn,
        sigma_n=params.sigma * n_bound,
        implied_c=-inf_unn - params.sigma * n_bound,
    )


def barrier_section(domain: DomainSpec, state, grid: Grid, problem: SampledProblem,
                    params: BarrierParams) -> dict:
    """All three verifier reports in JSON-ready form."""
    return {
        "params": {
            "K3": params.k3,
            "beta": params.beta,
            "A": params.cap_a,
            "sigma": params.sigma,
            "mu": params.mu,
            "gamma": params.gamma,
            "epsilon": params.epsilon,
        },
        "h_inequality": verify_h_inequality(domain, state, grid, params).as_dict(),
        "sub": verify_sub_barrier(domain, state, grid, problem, params).as_dict(),
        "super": verify_super_barrier(domain, state, grid, problem, params).as_dict(),
    }
