"""Direct lattice numerics: ground-truth solves, branch tracing, eigensolves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .continuation import (BranchPoint, BranchResult, ContinuationParams,
                           StepFailure, correct, init_branch, trace_branch)
from .lattice import (LatticeSpec, ModelParams, StateField, linearized_operator,
                      norm_prefactor, norm_prefactor_derivative, residual_interior,
                      solution_norm)
from .pinn import onset_mu, primary_profile
from .solver import LMConfig, SolverFailure, lm_solve
from .stability import EigenFailure, EigenResult, eigen_residual_values


def _check_size(spec: LatticeSpec, allow_large: bool):
    if spec.d >= 5:
        raise ValueError("direct solves are unsupported in five dimensions")
    if spec.d == 4 and not allow_large:
        raise ValueError("4D direct solves need allow_large=True (large Jacobian)")


class DirectSystem:
    """Raw-unknown view of the lattice system for the continuation engine."""

    kind = "direct"

    def __init__(self, spec: LatticeSpec, allow_large: bool = False):
        _check_size(spec, allow_large)
        self.spec = spec
        self.n_eq = spec.n_interior
        self.neighbors = spec.neighbor_table()
        self.adjacency = spec.adjacency()
        # dense template avoids per-iteration sparse assembly at corrector sizes
        self._coupling = (spec.c * self.adjacency).toarray()
        self._diag_idx = np.arange(self.n_eq)

    def residual(self, x):
        return residual_interior(self.spec, x[:-1], x[-1], self.neighbors)

    def jacobian(self, x):
        u, mu = x[:-1], x[-1]
        J = np.empty((self.n_eq, self.n_eq + 1))
        J[:, :-1] = self._coupling
        J[self._diag_idx, self._diag_idx] += (mu - 2.0 * self.spec.d * self.spec.c
                                              + 6.0 * u**2 - 5.0 * u**4)
        J[:, -1] = u
        return J

    def norm_terms(self, x):
        u, mu = x[:-1], x[-1]
        pref = norm_prefactor(mu)
        sq = float(u @ u)
        grad = np.append(pref * 2.0 * u, norm_prefactor_derivative(mu) * sq)
        return pref * sq, grad

    def norm_of(self, x):
        return norm_prefactor(x[-1]) * float(x[:-1] @ x[:-1])

    def full_mse(self, x):
        f = self.residual(x)
        return float(f @ f) / self.n_eq

    def state_fit_predictor(self, x1, x2, cfg: LMConfig, fresh_seed=None):
        return 2.0 * x2 - x1

    def init_points(self, mus, cfg: LMConfig, seed: int = 0):
        u_a, _ = direct_solve_on_primary_branch(self.spec, mus[0], cfg)
        u_b, _ = direct_solve(self.spec, mus[1], u_a.interior_vector(), cfg)
        out = []
        for mu, state in ((mus[0], u_a), (mus[1], u_b)):
            u = state.interior_vector()
            x = np.append(u, mu)
            out.append(BranchPoint(k=0, mu=mu, norm=float(self.norm_of(x)),
                                   mse=float(self.full_mse(x)), constraint=0.0,
                                   w=u, kind="direct"))
        return out


def direct_solve(spec: LatticeSpec, mu: float, u0: np.ndarray, cfg: LMConfig,
                 allow_large: bool = False):
    """LM on the raw lattice unknowns with the sparse state Jacobian."""
    _check_size(spec, allow_large)
    if len(u0) != spec.n_interior:
        raise ValueError(f"u0 must have {spec.n_interior} entries")
    nbr = spec.neighbor_table()
    adj = spec.adjacency()
    c2d = 2.0 * spec.d * spec.c

    def res(u):
        return residual_interior(spec, u, mu, nbr)

    def jac(u):
        return (sp.diags(mu - c2d + 6.0 * u**2 - 5.0 * u**4) + spec.c * adj).tocsr()

    run_cfg = cfg if cfg.residual_tol > 0 else _with_tol(cfg, 1e-26)
    u, trace = lm_solve(res, jac, np.asarray(u0, dtype=float), cfg=run_cfg)
    return StateField.from_interior(spec, u), trace


def _with_tol(cfg: LMConfig, tol: float) -> LMConfig:
    return LMConfig(lambda0=cfg.lambda0, up_factor=cfg.up_factor,
                    down_factor=cfg.down_factor, max_iter=cfg.max_iter,
                    residual_tol=tol, step_tol=cfg.step_tol, seed=cfg.seed)


def direct_solve_on_primary_branch(spec: LatticeSpec, mu_target: float,
                                   cfg: LMConfig, mu_step: float = 0.005):
    """Direct-space twin of the PINN primary-branch ladder."""
    mu_start = onset_mu(spec) - mu_step
    if mu_target >= mu_start:
        mu_start = mu_target
    u = primary_profile(spec, mu_start)
    mu = mu_start
    state, trace = direct_solve(spec, mu, u, cfg)
    while mu > mu_target + 1e-12:
        mu = max(mu - mu_step, mu_target)
        state, trace = direct_solve(spec, mu, state.interior_vector(), cfg)
    return state, trace


def direct_trace_branch(spec: LatticeSpec, p: ContinuationParams, cfg: LMConfig,
                        allow_large: bool = False) -> BranchResult:
    """Predictor/constraint/corrector continuation on x = (u, mu)."""
    system = DirectSystem(spec, allow_large=allow_large)
    return trace_branch(system, p, cfg)


def mu_at_norm(spec: LatticeSpec, u_start: np.ndarray, mu_start: float,
               target_norm: float, cfg: Optional[LMConfig] = None,
               alpha: float = 10.0):
    """Direct solution pinned to an exact norm: {f(u, mu)=0, norm(u, mu)=target}.

    Warm-started from a nearby branch point; used for matched-norm branch
    comparisons without interpolation error. Returns (u, mu).
    """
    cfg = cfg or LMConfig(max_iter=60)
    nbr = spec.neighbor_table()
    coupling = (spec.c * spec.adjacency()).toarray()
    c2d = 2.0 * spec.d * spec.c
    n_eq = spec.n_interior
    diag_idx = np.arange(n_eq)

    def residual(x):
        u, mu = x[:-1], x[-1]
        if mu <= -1.0:
            return np.full(n_eq + 1, np.nan)
        f = residual_interior(spec, u, mu, nbr)
        con = alpha * (norm_prefactor(mu) * float(u @ u) - target_norm)
        return np.append(f, con)

    def jacobian(x):
        u, mu = x[:-1], x[-1]
        J = np.empty((n_eq + 1, n_eq + 1))
        J[:-1, :-1] = coupling
        J[diag_idx, diag_idx] += mu - c2d + 6.0 * u**2 - 5.0 * u**4
        J[:-1, -1] = u
        pref = norm_prefactor(mu)
        J[-1] = alpha * np.append(pref * 2.0 * u,
                                  norm_prefactor_derivative(mu) * float(u @ u))
        return J

    def accepted(F):
        return (float(F[:-1] @ F[:-1]) / n_eq <= 1e-18
                and abs(F[-1]) / alpha <= 1e-11)

    x0 = np.append(np.asarray(u_start, dtype=float), mu_start)
    x, trace = lm_solve(residual, jacobian, x0, cfg, converged=accepted)
    F = residual(x)
    if not accepted(F):
        raise SolverFailure("norm-pinned solve did not converge", trace)
    return x[:-1], float(x[-1])


def direct_largest_eigenpair(spec: LatticeSpec, state: StateField, mu: float,
                             method: str = "auto", tol: float = 1e-12,
                             max_iter: int = 200000):
    """Largest eigenvalue/eigenvector of the linearized operator.

    Dense symmetric solve by default for d <= 2 sizes, shifted power iteration
    otherwise; the eigenvector is sign-normalized to nonnegative mean and
    clipped at zero (Sturm-Liouville: the top eigenvector has no sign changes).
    """
    H = linearized_operator(spec, state, ModelParams(mu))
    n = H.shape[0]
    if method == "auto":
        method = "dense" if n <= 2500 else "power"
    if method == "dense":
        evals, evecs = scipy.linalg.eigh(H.toarray())
        lam = float(evals[-1])
        v = evecs[:, -1]
    elif method == "power":
        diag = H.diagonal()
        shift = -(diag.min() - 2.0 * spec.d * spec.c) + 0.5
        v = np.ones(n) / np.sqrt(n)
        lam = 0.0
        for _ in range(max_iter):
            y = H @ v + shift * v
            v = y / np.linalg.norm(y)
            lam = float(v @ (H @ v))
            if np.linalg.norm(H @ v - lam * v) <= tol:
                break
        else:
            raise EigenFailure(f"power iteration stalled above tol={tol:g}")
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    if v.mean() < 0:
        v = -v
    v = np.maximum(v, 0.0)
    v /= np.linalg.norm(v)
    vfield = StateField.from_interior(spec, v)
    res = eigen_residual_values(spec, state.interior_vector(), mu, v, lam)
    return EigenResult(lam=lam, v=vfield,
                       residual_mse=float(res @ res) / (n + 1),
                       norm_defect=abs(float(np.linalg.norm(v)) - 1.0))
