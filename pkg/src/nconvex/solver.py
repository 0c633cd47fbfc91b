"""Damped Newton inside homotopy continuation for the discrete problem.

The interior equation is linearized through the gradient of det(W) with
respect to the Hessian entries, contracted with the stencil coefficients;
the Robin rows are linear and precomputed on the grid.  Every accepted
iterate must keep the smallest lifted eigenvalue of W positive at all
active points (the discrete ellipticity certificate), which the line
search enforces alongside plain residual decrease.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from nconvex import woperator
from nconvex.discretize import (
    DiscreteField,
    Grid,
    SampledProblem,
    gradient_batch,
    hessian_batch,
    interior_residual,
    normal_derivative,
    robin_residual,
    second_normal_derivative,
)
from nconvex.geometry import pinching_check

__all__ = [
    "SolverConfig",
    "BoundMonitors",
    "HomotopyState",
    "PathReport",
    "StepFailure",
    "ContinuationFailure",
    "residual_vector",
    "assemble_jacobian",
    "ellipticity_margin",
    "bound_monitors",
    "newton_solve",
    "quadratic_seed",
    "continuation",
]

REPORT_COLUMNS = ("t", "residual", "margin", "sup_u", "sup_du", "sup_d2u", "N", "ratio")


class StepFailure(RuntimeError):
    """A Newton solve at fixed t did not converge; the caller shrinks dt."""


class ContinuationFailure(RuntimeError):
    """The homotopy step size underflowed; carries the last good state."""

    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    homotopy_steps: int = 10
    min_step: float = 1.0 / 1280.0
    damping: float = 0.5
    line_search_floor: float = 1e-8

    def __post_init__(self):
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.homotopy_steps < 1:
            raise ValueError("homotopy_steps must be at least 1")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")


@dataclass(frozen=True)
class BoundMonitors:
    """Solution-norm monitors tracked along the homotopy path."""

    sup_u: float
    sup_du: float
    sup_d2u: float
    sup_unn: float  # N: largest |u_nunu| over the boundary

    @property
    def ratio(self) -> float:
        return self.sup_d2u / (1.0 + self.sup_unn)


@dataclass
class HomotopyState:
    t: float
    field: DiscreteField
    residual_norm: float
    ellipticity_margin: float
    monitors: BoundMonitors


@dataclass
class PathReport:
    """One row per accepted homotopy parameter, plus optional barrier data."""

    rows: list = field(default_factory=list)
    barriers: dict | None = None
    config_digest: str | None = None
    exact_error: float | None = None  # sup |u - reference| when one is known

    def add(self, state: HomotopyState):
        m = state.monitors
        self.rows.append(
            {
                "t": state.t,
                "residual": state.residual_norm,
                "margin": state.ellipticity_margin,
                "sup_u": m.sup_u,
                "sup_du": m.sup_du,
                "sup_d2u": m.sup_d2u,
                "N": m.sup_unn,
                "ratio": m.ratio,
            }
        )

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(repr(row[c]) for c in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {"rows": self.rows}
        if self.config_digest is not None:
            payload["config_digest"] = self.config_digest
        if self.exact_error is not None:
            payload["exact_error"] = self.exact_error
        if self.barriers is not None:
            payload["barriers"] = self.barriers
        return json.dumps(payload, indent=2, sort_keys=True)


def residual_vector(x: np.ndarray, t: float, grid: Grid,
                    problem: SampledProblem) -> np.ndarray:
    """Stacked interior and Robin residuals for the packed unknown vector."""
    fld = DiscreteField.unpack(x, grid)
    return np.concatenate(
        [
            interior_residual(fld, grid, problem, t),
            robin_residual(fld, grid, problem, t),
        ]
    )


def ellipticity_margin(fld: DiscreteField, grid: Grid, m: int) -> float:
    """Smallest lifted eigenvalue of W over all active points."""
    d2 = hessian_batch(fld, grid)
    return float(np.min(woperator.batch_min_lift_eig(d2, m)))


def assemble_jacobian(x: np.ndarray, t: float, grid: Grid,
                      problem: SampledProblem) -> sp.csr_matrix:
    """Sparse Jacobian of the stacked residual at the packed state.

    Interior rows chain the det(W) gradient through the stencil
    coefficients; closure columns route through the precomputed trace/ray
    map; Robin rows are the constant operator stored on the grid.
    """
    fld = DiscreteField.unpack(x, grid)
    d2 = hessian_batch(fld, grid)
    grad = woperator.batch_linearization(d2, problem.m)  # (N, n, n)
    n_act = grid.n_active
    rows_direct, cols_direct, vals_direct = [], [], []
    rows_ghost, cols_ghost, vals_ghost = [], [], []
    arange_act = np.arange(n_act)
    for s_idx, terms in enumerate(grid.offset_hess_terms):
        weight = np.zeros(n_act)
        for i, j, c in terms:
            weight += c * grad[:, i, j]
        tgt = grid.tgt_idx[s_idx]
        a_col = grid._box_to_active[tgt]
        g_col = grid._box_to_ghost[tgt]
        at_active = a_col >= 0
        rows_direct.append(arange_act[at_active])
        cols_direct.append(a_col[at_active])
        vals_direct.append(weight[at_active])
        at_ghost = ~at_active
        if np.any(at_ghost):
            rows_ghost.append(arange_act[at_ghost])
            cols_ghost.append(g_col[at_ghost])
            vals_ghost.append(weight[at_ghost])
    direct = sp.csr_matrix(
        (np.concatenate(vals_direct),
         (np.concatenate(rows_direct), np.concatenate(cols_direct))),
        shape=(n_act, grid.n_unknowns),
    )
    interior = direct
    if rows_ghost:
        ghost_part = sp.csr_matrix(
            (np.concatenate(vals_ghost),
             (np.concatenate(rows_ghost), np.concatenate(cols_ghost))),
            shape=(n_act, grid.n_ghost),
        )
        interior = interior + ghost_part @ grid.C
    return sp.vstack([interior, grid.robin_jac], format="csc")


def bound_monitors(fld: DiscreteField, grid: Grid) -> BoundMonitors:
    """Norm monitors: sup|u|, sup|Du|, sup|D2u| and the boundary N."""
    fld.check(grid)
    sup_u = max(float(np.max(np.abs(fld.values))), float(np.max(np.abs(fld.trace))))
    grads = gradient_batch(fld, grid)
    sup_du = float(np.max(np.linalg.norm(grads, axis=1)))
    sup_du = max(sup_du, float(np.max(np.abs(normal_derivative(fld, grid)))))
    d2 = hessian_batch(fld, grid)
    sup_d2u = float(np.max(np.abs(np.linalg.eigvalsh(d2))))
    sup_unn = float(np.max(np.abs(second_normal_derivative(fld, grid))))
    return BoundMonitors(sup_u=sup_u, sup_du=sup_du, sup_d2u=sup_d2u, sup_unn=sup_unn)


def _make_state(t: float, fld: DiscreteField, grid: Grid,
                problem: SampledProblem) -> HomotopyState:
    r = residual_vector(fld.pack(), t, grid, problem)
    return HomotopyState(
        t=t,
        field=fld,
        residual_norm=float(np.max(np.abs(r))),
        ellipticity_margin=ellipticity_margin(fld, grid, problem.m),
        monitors=bound_monitors(fld, grid),
    )


def newton_solve(state: HomotopyState, grid: Grid, problem: SampledProblem,
                 config: SolverConfig) -> HomotopyState:
    """Damped Newton at fixed t with the cone guard in the line search.

    Each step factorizes the sparse Jacobian and backtracks until the trial
    iterate both decreases the sup-norm residual and keeps the ellipticity
    margin positive at every active point.  Raises StepFailure when the
    iteration budget, the line-search floor, or the factorization gives out.
    """
    if state.ellipticity_margin <= 0.0:
        raise ValueError(
            f"inadmissible start: ellipticity margin {state.ellipticity_margin:.3g} <= 0"
        )
    t = state.t
    x = state.field.pack()
    r = residual_vector(x, t, grid, problem)
    rnorm = float(np.max(np.abs(r)))
    for _ in range(config.max_newton_iters):
        if rnorm <= config.newton_tol:
            return _make_state(t, DiscreteField.unpack(x, grid), grid, problem)
        jac = assemble_jacobian(x, t, grid, problem)
        try:
            lu = splu(jac)
        except RuntimeError as exc:
            raise StepFailure(f"Jacobian factorization failed at t={t:.6g}: {exc}")
        delta = lu.solve(-r)
        if not np.all(np.isfinite(delta)):
            raise StepFailure(f"singular Jacobian at t={t:.6g}")
        alpha = 1.0
        while True:
            trial = x + alpha * delta
            trial_fld = DiscreteField.unpack(trial, grid)
            trial_r = residual_vector(trial, t, grid, problem)
            trial_norm = float(np.max(np.abs(trial_r)))
            if trial_norm < rnorm and ellipticity_margin(trial_fld, grid, problem.m) > 0.0:
                x, r, rnorm = trial, trial_r, trial_norm
                break
            alpha *= config.damping
            if alpha < config.line_search_floor:
                raise StepFailure(
                    f"line search floor reached at t={t:.6g} (residual {rnorm:.3g})"
                )
    if rnorm <= config.newton_tol:
        return _make_state(t, DiscreteField.unpack(x, grid), grid, problem)
    raise StepFailure(
        f"Newton did not reach tol {config.newton_tol:.1e} at t={t:.6g} "
        f"(residual {rnorm:.3g} after {config.max_newton_iters} iterations)"
    )


def quadratic_seed(grid: Grid) -> DiscreteField:
    """The exact homotopy-start field u = |x|^2 / 2."""
    return DiscreteField.from_function(grid, lambda pts: 0.5 * np.sum(pts**2, axis=1))


def continuation(problem: SampledProblem, grid: Grid, config: SolverConfig,
                 force: bool = False):
    """March t from 0 to 1 with adaptive halving; returns (state, report).

    The curvature-pinching gate runs first unless ``force`` is set; the
    start iterate is the exact t = 0 solution.  On persistent step failure
    raises ContinuationFailure carrying the last accepted state and report.
    """
    gate = pinching_check(grid.domain)
    if not (gate.passes or force):
        raise ValueError(
            "domain rejected: curvature spread exceeds the pinching bound "
            f"H / (2(n-1)(n-2)) (margin {gate.margin_min:.4g} at sampled point "
            f"{np.round(gate.worst_point, 6)}); pass force=True to override"
        )
    report = PathReport()
    state = _make_state(0.0, quadratic_seed(grid), grid, problem)
    if state.ellipticity_margin <= 0.0:
        raise ValueError("quadratic seed is not admissible on this grid")
    state = newton_solve(state, grid, problem, config)
    report.add(state)
    dt_init = 1.0 / config.homotopy_steps
    dt = dt_init
    while state.t < 1.0:
        t_next = state.t + dt
        if t_next >= 1.0 - 1e-12:
            t_next = 1.0
        candidate = HomotopyState(
            t=t_next,
            field=state.field.copy(),
            residual_norm=state.residual_norm,
            ellipticity_margin=state.ellipticity_margin,
            monitors=state.monitors,
        )
        try:
            state = newton_solve(candidate, grid, problem, config)
        except StepFailure as exc:
            dt *= 0.5
            if dt < config.min_step:
                raise ContinuationFailure(
                    f"step size underflow below {config.min_step:.3g} at "
                    f"t={state.t:.6g}: {exc}",
                    state=state,
                    report=report,
                ) from exc
            continue
        report.add(state)
        dt = min(dt * 2.0, dt_init)
    return state, report
