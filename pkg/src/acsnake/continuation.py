"""Pseudo-arclength continuation: predictor, constraint, corrector, branch tracing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import norm_prefactor, norm_prefactor_derivative
from .pinn import PinnProblem, fit_to_values, solve_on_primary_branch
from .solver import LMConfig, SolverFailure, lm_solve


class StepFailure(RuntimeError):
    """Corrector did not reach the acceptance thresholds."""


class BranchInitError(RuntimeError):
    """One of the two initial fixed-mu solves failed."""


@dataclass
class ContinuationParams:
    """Constraint weights and step controls for both continuation modes.

    Norm mode (beta2 = delta = 0, gamma != 0) advances the solution norm by
    gamma per step; arclength mode (gamma = 0, beta1, beta2 > 0) keeps steps at
    fixed distance delta in the scaled (norm, mu) plane.
    """

    alpha: float = 10.0
    beta1: float = 1.0
    beta2: float = 0.0
    gamma: float = 0.01
    delta: float = 0.0
    drop_sqrt: bool = False
    k_max: int = 5000
    norm_target: float = 10.0
    mse_tol: Optional[float] = 1e-12
    constraint_tol: Optional[float] = 1e-8
    mu_init: Optional[tuple] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        norm_mode = self.beta2 == 0.0 and self.delta == 0.0 and self.gamma != 0.0
        arc_mode = self.gamma == 0.0 and self.beta1 > 0.0 and self.beta2 > 0.0 \
            and self.delta > 0.0
        if norm_mode == arc_mode:
            raise ValueError("parameters must select exactly one continuation mode")
        if self.drop_sqrt and self.delta != 1.0:
            raise ValueError("drop_sqrt is only valid with delta = 1")

    @property
    def mode(self) -> str:
        return "norm" if self.beta2 == 0.0 else "arclength"

    def default_mu_init(self) -> tuple:
        if self.mu_init is not None:
            return self.mu_init
        if self.mode == "norm":
            return (-0.10, -0.12)
        return (-0.10, -0.10 - 1.0 / self.beta2)


@dataclass
class BranchPoint:
    """One converged continuation step: parameters, norm, diagnostics."""

    k: int
    mu: float
    norm: float
    mse: float
    constraint: float
    w: np.ndarray
    kind: str = "pinn"
    lambda_max: Optional[float] = None
    stable: Optional[bool] = None


@dataclass
class BranchResult:
    points: list
    params: ContinuationParams
    aborted: bool = False
    message: str = ""


def constraint_residual(cur, prev, p: ContinuationParams) -> float:
    """Step-constraint value for (norm, mu) pairs cur and prev.

    alpha*(sqrt([beta1*(dn - gamma)]^2 + [beta2*dmu]^2) - delta), or the
    square-root-free variant alpha*(T1^2 + T2^2 - 1) when drop_sqrt.
    """
    t1 = p.beta1 * (cur[0] - (prev[0] + p.gamma))
    t2 = p.beta2 * (cur[1] - prev[1])
    if p.drop_sqrt:
        return p.alpha * (t1 * t1 + t2 * t2 - 1.0)
    return p.alpha * (np.hypot(t1, t2) - p.delta)


def predict(p1: BranchPoint, p2: BranchPoint):
    """Secant extrapolation 2*(W, mu)[k-1] - (W, mu)[k-2]."""
    if p1.w.shape != p2.w.shape:
        raise ValueError("branch points carry different parameter lengths")
    return 2.0 * p2.w - p1.w, 2.0 * p2.mu - p1.mu


class WeightSpaceSystem:
    """Augmented-(W, mu) view of a PinnProblem for the continuation engine."""

    kind = "pinn"

    def __init__(self, problem: PinnProblem):
        if not problem.augmented:
            problem = PinnProblem(problem.spec, problem.shape, problem.mode, mu=None)
        self.problem = problem
        self.n_eq = problem.n_interior

    def residual(self, x):
        return self.problem.assemble_residual(x)

    def jacobian(self, x):
        return self.problem.assemble_jacobian(x)

    def norm_terms(self, x):
        norm, grad_w, grad_mu = self.problem.norm_and_gradient(x)
        return norm, np.append(grad_w, grad_mu)

    def norm_of(self, x):
        return self.problem.solution_norm(x)

    def full_mse(self, x):
        return self.problem.mse(x)

    def state_fit_predictor(self, x1, x2, cfg: LMConfig, fresh_seed=None):
        """Extrapolate the lattice state and refit the weights to it.

        A fresh-seed fit escapes saturated weight regions (badly conditioned
        Jacobians) that the warm-started fit would inherit.
        """
        u_pred = 2.0 * self.problem.interior_values(x2) - self.problem.interior_values(x1)
        fit_cfg = LMConfig(max_iter=200, residual_tol=1e-26, seed=cfg.seed)
        if fresh_seed is None:
            w_fit, _ = fit_to_values(self.problem, u_pred, fit_cfg, w0=x2[:-1].copy())
        else:
            w_fit, _ = fit_to_values(self.problem, u_pred, fit_cfg, seed=fresh_seed)
        return np.append(w_fit, 2.0 * x2[-1] - x1[-1])

    def init_points(self, mus, cfg: LMConfig, seed: int = 0):
        """Primary-branch solves at two mu values, the second warm-started."""
        from .pinn import solve_fixed_mu
        problem = self.problem
        w_a, _ = solve_on_primary_branch(problem, mus[0], cfg, seed=seed)
        fixed = PinnProblem(problem.spec, problem.shape, problem.mode, mu=mus[1])
        rung_cfg = LMConfig(lambda0=cfg.lambda0, up_factor=cfg.up_factor,
                            down_factor=cfg.down_factor,
                            max_iter=max(cfg.max_iter, 200),
                            residual_tol=max(cfg.residual_tol, 1e-30), seed=cfg.seed)
        w_b, _ = solve_fixed_mu(fixed, w_a[:problem.shape.n_params], rung_cfg)
        out = []
        for mu, w in ((mus[0], w_a), (mus[1], w_b)):
            x = np.append(w[:problem.shape.n_params], mu)
            out.append(BranchPoint(k=0, mu=mu, norm=float(self.norm_of(x)),
                                   mse=float(self.full_mse(x)), constraint=0.0,
                                   w=x[:-1].copy(), kind=self.kind))
        return out


def _corrector_system(system, prev, p: ContinuationParams, sec_hat, delta_eff,
                      gamma_eff):
    """Residual/Jacobian closures of the augmented system {f rows, constraint row}.

    In arclength mode the constraint is oriented by the secant direction so the
    corrector cannot converge backward along the branch; the accepted point
    satisfies the plain constraint exactly.
    """
    alpha, beta1, beta2 = p.alpha, p.beta1, p.beta2
    n_eq = system.n_eq

    def terms(x, with_grad):
        mu = x[-1]
        if mu <= -1.0:
            return None
        f = system.residual(x)
        if with_grad:
            norm, dnorm = system.norm_terms(x)
        else:
            norm, dnorm = system.norm_of(x), None
        t1 = beta1 * (norm - (prev[0] + gamma_eff))
        t2 = beta2 * (mu - prev[1])
        if sec_hat is None:
            sigma = 1.0
        else:
            proj = t1 * sec_hat[0] + t2 * sec_hat[1]
            sigma = 1.0 if proj >= 0.0 else -1.0
        return f, norm, t1, t2, sigma, dnorm

    def residual(x):
        got = terms(x, with_grad=False)
        if got is None:
            return np.full(n_eq + 1, np.nan)
        f, _, t1, t2, sigma, _ = got
        if p.drop_sqrt:
            con = alpha * (sigma * (t1 * t1 + t2 * t2) - delta_eff**2)
        else:
            con = alpha * (sigma * np.hypot(t1, t2) - delta_eff)
        return np.append(f, con)

    def jacobian(x):
        got = terms(x, with_grad=True)
        if got is None:
            return np.zeros((n_eq + 1, len(x)))
        f, _, t1, t2, sigma, dnorm = got
        Jsys = system.jacobian(x)
        dmu = np.zeros(len(x))
        dmu[-1] = 1.0
        dt1 = beta1 * dnorm
        dt2 = beta2 * dmu
        if p.drop_sqrt:
            grad = alpha * sigma * 2.0 * (t1 * dt1 + t2 * dt2)
        else:
            s = max(np.hypot(t1, t2), 1e-300)
            grad = alpha * sigma * (t1 * dt1 + t2 * dt2) / s
        return np.vstack([Jsys, grad])

    return residual, jacobian


def correct(pred, prev: BranchPoint, problem, p: ContinuationParams,
            cfg: LMConfig, delta_scale: float = 1.0, x0=None,
            rounds: int = 4) -> BranchPoint:
    """Solve the augmented system from the predicted (W, mu) pair.

    Acceptance requires the full-system MSE and |constraint|/alpha to meet the
    thresholds in p; otherwise StepFailure. delta_scale locally shrinks gamma
    or delta for retry steps. When LM stalls close to the thresholds, up to
    `rounds` restarts (damping reset) continue from the stalled iterate.
    """
    system = problem if hasattr(problem, "n_eq") else WeightSpaceSystem(problem)
    if x0 is None:
        w_pred, mu_pred = pred
        x0 = np.append(w_pred, mu_pred)
    gamma_eff = p.gamma * delta_scale
    delta_eff = p.delta * delta_scale
    sec_hat = None
    if p.mode == "arclength":
        norm_pred = _safe_norm(system, x0)
        if norm_pred is None:
            raise StepFailure("predictor left the admissible region (mu <= -1)")
        t1 = p.beta1 * (norm_pred - prev.norm)
        t2 = p.beta2 * (x0[-1] - prev.mu)
        scale = max(np.hypot(t1, t2), 1e-300)
        sec_hat = (t1 / scale, t2 / scale)
    residual, jacobian = _corrector_system(system, (prev.norm, prev.mu), p,
                                           sec_hat, delta_eff, gamma_eff)
    strict = p.mse_tol is not None and p.constraint_tol is not None

    def accepted(F):
        f, con = F[:-1], F[-1]
        return (float(f @ f) / system.n_eq <= p.mse_tol
                and abs(con) / p.alpha <= p.constraint_tol)

    x = x0
    mse = con_abs = np.inf
    for attempt in range(max(rounds, 1) if strict else 1):
        try:
            x, trace = lm_solve(residual, jacobian, x, cfg,
                                converged=accepted if strict else None)
        except SolverFailure as exc:
            raise StepFailure(f"corrector LM failed: {exc}") from exc
        F = residual(x)
        f, con = F[:-1], F[-1]
        mse = float(f @ f) / system.n_eq
        con_abs = abs(float(con))
        if not strict or accepted(F):
            break
        # resume only when the stall is within reach of the thresholds
        if not (np.isfinite(mse) and mse <= 1e4 * p.mse_tol
                and con_abs / p.alpha <= 1e4 * p.constraint_tol):
            break
    if strict and (mse > p.mse_tol or con_abs / p.alpha > p.constraint_tol
                   or not np.isfinite(mse)):
        raise StepFailure(
            f"corrector stalled at mse={mse:.3e}, |constraint|/alpha={con_abs / p.alpha:.3e}")
    norm = system.norm_of(x)
    return BranchPoint(k=-1, mu=float(x[-1]), norm=float(norm), mse=mse,
                       constraint=float(con), w=x[:-1].copy(), kind=system.kind)


def _safe_norm(system, x):
    if x[-1] <= -1.0:
        return None
    return system.norm_of(x)


def _with_max_iter(cfg: LMConfig, max_iter: int) -> LMConfig:
    return LMConfig(lambda0=cfg.lambda0, up_factor=cfg.up_factor,
                    down_factor=cfg.down_factor, max_iter=max_iter,
                    residual_tol=cfg.residual_tol, step_tol=cfg.step_tol,
                    seed=cfg.seed, max_rejections=cfg.max_rejections)


def _with_lambda0(cfg: LMConfig, lambda0: float) -> LMConfig:
    return LMConfig(lambda0=lambda0, up_factor=cfg.up_factor,
                    down_factor=cfg.down_factor, max_iter=cfg.max_iter,
                    residual_tol=cfg.residual_tol, step_tol=cfg.step_tol,
                    seed=cfg.seed, max_rejections=cfg.max_rejections)


def init_branch(problem, p: ContinuationParams, cfg: LMConfig, seed: int = 0):
    """Two converged solutions on the primary branch at the init mu pair.

    Solutions are ordered so the predictor continues into the subcritical
    region (first point at the larger mu); their (norm, mu) gap approximately
    satisfies the step constraint by construction of the defaults.
    """
    system = problem if hasattr(problem, "n_eq") else WeightSpaceSystem(problem)
    mu_a, mu_b = p.default_mu_init()
    try:
        points = system.init_points((mu_a, mu_b), cfg, seed)
    except SolverFailure as exc:
        raise BranchInitError(f"initial solve failed: {exc}") from exc
    p1, p2 = points
    con = constraint_residual((p2.norm, p2.mu), (p1.norm, p1.mu), p)
    p1.constraint = 0.0
    p2.constraint = float(con)
    p1.k, p2.k = 1, 2
    return p1, p2


def trace_branch(problem, p: ContinuationParams, cfg: LMConfig,
                 seed: int = 0, init_points=None) -> BranchResult:
    """init_branch, then predict/correct until norm_target or k_max.

    Retry ladder per step: secant predictor at full step, state-refit predictor
    at full step, then the same pair at half step. Two consecutive failed steps
    abort with the partial branch flagged.
    """
    system = problem if hasattr(problem, "n_eq") else WeightSpaceSystem(problem)
    if init_points is None:
        p1, p2 = init_branch(system, p, cfg, seed=seed)
    else:
        p1, p2 = init_points
    points = [p1, p2]
    consecutive_failures = 0
    relaxed = p.mse_tol is None or p.constraint_tol is None
    quick_cfg = cfg if cfg.max_iter <= 150 else _with_max_iter(cfg, 150)
    local_cfg = cfg if cfg.lambda0 >= 3e-2 else _with_lambda0(cfg, 3e-2)
    for k in range(3, p.k_max + 1):
        prev2, prev = points[-2], points[-1]
        # reject rescue solutions that hop to another branch: the mu step must
        # stay comparable to the recent history
        recent = [abs(points[i].mu - points[i - 1].mu)
                  for i in range(max(1, len(points) - 4), len(points))]
        mu_cap = max(0.02, 8.0 * max(recent))
        got = None
        attempts = [("secant", 1.0, quick_cfg), ("refit", 1.0, quick_cfg),
                    ("fresh", 1.0, local_cfg), ("fresh2", 1.0, local_cfg),
                    ("fresh", 0.5, local_cfg)]
        if relaxed:
            attempts = [("secant", 1.0, cfg)]
        for predictor, scale, step_cfg in attempts:
            x2 = np.append(prev.w, prev.mu)
            x1 = np.append(prev2.w, prev2.mu)
            if predictor == "secant":
                x0 = 2.0 * x2 - x1
            elif predictor == "refit":
                x0 = system.state_fit_predictor(x1, x2, cfg)
            elif predictor == "fresh":
                x0 = system.state_fit_predictor(x1, x2, cfg, fresh_seed=cfg.seed + k)
            else:
                x0 = system.state_fit_predictor(x1, x2, cfg,
                                                fresh_seed=cfg.seed + k + 1000)
            try:
                bp = correct(None, prev, system, p, step_cfg,
                             delta_scale=scale, x0=x0)
            except StepFailure:
                continue
            if not relaxed and abs(bp.mu - prev.mu) > mu_cap:
                continue
            if p.mode == "arclength":
                t1 = p.beta1 * (bp.norm - prev.norm)
                t2 = p.beta2 * (bp.mu - prev.mu)
                s1 = p.beta1 * (prev.norm - prev2.norm)
                s2 = p.beta2 * (prev.mu - prev2.mu)
                if t1 * s1 + t2 * s2 <= 0.0:
                    continue
            got = bp
            break
        if got is None:
            consecutive_failures += 1
            if relaxed or consecutive_failures >= 2:
                return BranchResult(points, p, aborted=True,
                                    message=f"corrector failed twice at k={k}")
            continue
        consecutive_failures = 0
        got.k = k
        points.append(got)
        if got.norm >= p.norm_target:
            break
    return BranchResult(points, p)


def write_branch_csv(path, result: BranchResult, method: str = "pinn"):
    """Branch CSV with the full parameter set echoed in a leading comment row."""
    p = result.params
    with open(path, "w", newline="") as fh:
        fh.write(f"# alpha={p.alpha:.17g} beta1={p.beta1:.17g} beta2={p.beta2:.17g} "
                 f"gamma={p.gamma:.17g} delta={p.delta:.17g} drop_sqrt={int(p.drop_sqrt)} "
                 f"k_max={p.k_max} norm_target={p.norm_target:.17g} "
                 f"aborted={int(result.aborted)}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "mu", "norm", "mse", "constraint_residual",
                         "lambda_max", "stable", "method"])
        for bp in result.points:
            writer.writerow([
                bp.k, f"{bp.mu:.17g}", f"{bp.norm:.17g}", f"{bp.mse:.17g}",
                f"{bp.constraint:.17g}",
                "" if bp.lambda_max is None else f"{bp.lambda_max:.17g}",
                "" if bp.stable is None else int(bp.stable),
                method,
            ])


def count_folds(points) -> int:
    """Sign changes of consecutive mu increments along the branch."""
    mus = np.array([bp.mu for bp in points])
    dmu = np.diff(mus)
    dmu = dmu[dmu != 0.0]
    return int(((dmu[1:] * dmu[:-1]) < 0).sum())
