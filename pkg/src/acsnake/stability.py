"""Largest-eigenpair PINN with positivity and normalization; branch annotation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import LatticeSpec, StateField
from .network import InputMode, NetworkShape, _core, _core_jacobian, transform_indices
from .solver import LMConfig, SolverFailure, lm_solve


class EigenFailure(RuntimeError):
    """Eigen solve failed its acceptance checks."""


@dataclass
class EigenResult:
    """Converged eigenpair: eigenvalue, nonnegative unit eigenvector, residuals."""

    lam: float
    v: StateField
    residual_mse: float
    norm_defect: float


def classify_stability(lam: float) -> str:
    """'stable' iff the largest eigenvalue is negative; zero counts as unstable."""
    if not np.isfinite(lam):
        raise ValueError(f"eigenvalue must be finite, got {lam}")
    return "stable" if lam < 0.0 else "unstable"


def eigen_mode() -> InputMode:
    return InputMode(mode="fold_sorted", masked=False, absolute=True)


def _stencil_terms(spec: LatticeSpec, u: np.ndarray, mu: float):
    """Diagonal of the linearized operator without the -2dc stencil part."""
    return mu + 6.0 * u**2 - 5.0 * u**4


def eigen_residual_values(spec: LatticeSpec, u: np.ndarray, mu: float,
                          v: np.ndarray, lam: float) -> np.ndarray:
    """Rows (mu - lam)v + c lap(v) + (6u^2 - 5u^4)v over A, then ||v||_2 - 1."""
    nbr = spec.neighbor_table()
    vpad = np.append(v, 0.0)
    lap = vpad[nbr[:, 0]]
    for k in range(1, 2 * spec.d):
        lap = lap + vpad[nbr[:, k]]
    lap -= 2.0 * spec.d * v
    rows = (_stencil_terms(spec, u, mu) - lam) * v + spec.c * lap
    return np.append(rows, np.linalg.norm(v) - 1.0)


class _EigenSystem:
    """Residual/Jacobian of the eigen network system over (W, lambda)."""

    def __init__(self, spec: LatticeSpec, state: StateField, mu: float,
                 shape: NetworkShape, mode: Optional[InputMode] = None):
        if shape.d_in != spec.d:
            raise ValueError("network dimension must match the lattice")
        self.spec = spec
        self.shape = shape
        self.mode = eigen_mode() if mode is None else mode
        if not self.mode.absolute:
            raise ValueError("eigen networks use the absolute-value output")
        self.mu = mu
        self.u = state.interior_vector()
        self.diag = _stencil_terms(spec, self.u, mu) - 2.0 * spec.d * spec.c
        self.inputs = transform_indices(spec, spec.interior_indices(), self.mode)
        self.neighbors = spec.neighbor_table()
        self.adjacency = spec.adjacency()
        self.n_eq = spec.n_interior

    def v_and_jac(self, w, want_jac=True):
        raw, cache = _core(self.shape, w[:self.shape.n_params], self.inputs)
        v = np.abs(raw)
        if not want_jac:
            return v, None
        Jv = _core_jacobian(self.shape, self.inputs, cache) * np.sign(raw)[:, None]
        return v, Jv

    def apply_operator(self, v):
        return self.diag * v + self.spec.c * (self.adjacency @ v)

    def residual(self, x):
        v, _ = self.v_and_jac(x, want_jac=False)
        rows = self.apply_operator(v) - x[-1] * v
        return np.append(rows, np.linalg.norm(v) - 1.0)

    def jacobian(self, x):
        v, Jv = self.v_and_jac(x)
        lam = x[-1]
        Jrows = (self.diag - lam)[:, None] * Jv + self.spec.c * (self.adjacency @ Jv)
        nv = max(np.linalg.norm(v), 1e-300)
        top = np.hstack([Jrows, -v[:, None]])
        bottom = np.append((v @ Jv) / nv, 0.0)
        return np.vstack([top, bottom])

    def rayleigh(self, v):
        sq = float(v @ v)
        if sq == 0.0:
            return 0.0
        return float(v @ self.apply_operator(v)) / sq

    def power_seed(self, tol=1e-10, max_iter=400):
        """Shifted power iteration from the all-ones vector (symmetric subspace)."""
        shift = -(self.diag.min() - 2.0 * self.spec.d * self.spec.c) + 0.5
        v = np.ones(self.n_eq) / np.sqrt(self.n_eq)
        lam = 0.0
        for _ in range(max_iter):
            y = self.apply_operator(v) + shift * v
            v = y / np.linalg.norm(y)
            lam = self.rayleigh(v)
            if np.linalg.norm(self.apply_operator(v) - lam * v) <= tol:
                break
        return lam, v


def eigen_residual(spec: LatticeSpec, state: StateField, mu: float,
                   shape: NetworkShape, w_aug: np.ndarray,
                   mode: Optional[InputMode] = None) -> np.ndarray:
    """Eigen-system residual for an augmented weight vector (trailing lambda)."""
    system = _EigenSystem(spec, state, mu, shape, mode)
    return system.residual(np.asarray(w_aug, dtype=float))


def solve_largest_eigenpair(spec: LatticeSpec, state: StateField, mu: float,
                            shape: NetworkShape, cfg: LMConfig,
                            mode: Optional[InputMode] = None,
                            w0: Optional[np.ndarray] = None,
                            mse_tol: float = 1e-16,
                            defect_tol: float = 1e-8) -> EigenResult:
    """Train the positivity-constrained eigen network jointly with lambda.

    The weight warm start fits the output to a short shifted-power-iteration
    estimate (all-ones start stays in the symmetric subspace, isolating the
    Sturm-Liouville ground pair); lambda starts from the Rayleigh quotient of
    the initial network output.
    """
    from .network import init_weights

    system = _EigenSystem(spec, state, mu, shape, mode)
    v_seed = None

    def seeded_start(seed):
        nonlocal v_seed
        if v_seed is None:
            _, v_seed = system.power_seed()

        def fit_res(w):
            return system.v_and_jac(w, want_jac=False)[0] - v_seed

        def fit_jac(w):
            return system.v_and_jac(w)[1]

        fit_cfg = LMConfig(max_iter=300, residual_tol=1e-24, seed=seed)
        w_fit, _ = lm_solve(fit_res, fit_jac, init_weights(shape, seed), fit_cfg)
        return w_fit

    target_cost = mse_tol * 1e-4 * (system.n_eq + 1)

    def accepted(F):
        return float(F @ F) <= target_cost

    starts = [w0] if w0 is not None else [None, None, None]
    last_error = "no attempts"
    for attempt, start in enumerate(starts):
        w_start = seeded_start(cfg.seed + attempt) if start is None else start
        w_start = np.asarray(w_start, dtype=float)[:shape.n_params]
        v0, _ = system.v_and_jac(w_start, want_jac=False)
        x0 = np.append(w_start, system.rayleigh(v0))
        try:
            x, trace = lm_solve(system.residual, system.jacobian, x0, cfg,
                                converged=accepted)
        except SolverFailure as exc:
            last_error = f"eigen LM failed: {exc}"
            continue
        F = system.residual(x)
        mse = float(F @ F) / (system.n_eq + 1)
        v, _ = system.v_and_jac(x, want_jac=False)
        defect = abs(float(np.linalg.norm(v)) - 1.0)
        if mse <= mse_tol and defect <= defect_tol:
            return EigenResult(lam=float(x[-1]), v=StateField.from_interior(spec, v),
                               residual_mse=mse, norm_defect=defect)
        last_error = f"eigen solve stalled at mse={mse:.3e}, norm defect={defect:.3e}"
    raise EigenFailure(last_error)


def annotate_branch(branch, method: str, problem=None, spec: Optional[LatticeSpec] = None,
                    shape: Optional[NetworkShape] = None,
                    cfg: Optional[LMConfig] = None, sample=None):
    """Fill lambda_max and stability flags on branch points.

    method 'pinn' runs the eigen network per point; 'oracle' uses the direct
    eigensolver. Per-point failures leave the fields empty rather than abort.
    """
    from .oracle import direct_largest_eigenpair

    if method not in ("pinn", "oracle"):
        raise ValueError("method must be 'pinn' or 'oracle'")
    cfg = cfg or LMConfig(max_iter=600)
    indices = range(len(branch)) if sample is None else sample
    for i in indices:
        bp = branch[i]
        if bp.kind == "pinn":
            if problem is None:
                raise ValueError("annotating a PINN branch needs its problem")
            state = problem.to_state(np.asarray(bp.w))
            espec = problem.spec
            eshape = shape or problem.shape
        else:
            if spec is None:
                raise ValueError("annotating a direct branch needs the lattice spec")
            state = StateField.from_interior(spec, np.asarray(bp.w))
            espec = spec
            eshape = shape
        try:
            if method == "oracle":
                result = direct_largest_eigenpair(espec, state, bp.mu)
            else:
                result = solve_largest_eigenpair(espec, state, bp.mu, eshape, cfg)
            bp.lambda_max = result.lam
            bp.stable = classify_stability(result.lam) == "stable"
        except (EigenFailure, SolverFailure):
            bp.lambda_max = None
            bp.stable = None
    return branch


def write_eigen_csv(path, rows):
    """Rows of (k, mu, norm, lambda_pinn, lambda_oracle, stable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mu", "norm", "lambda_pinn", "lambda_oracle", "stable"])
        for r in rows:
            writer.writerow([
                r[0], f"{r[1]:.17g}", f"{r[2]:.17g}",
                "" if r[3] is None else f"{r[3]:.17g}",
                "" if r[4] is None else f"{r[4]:.17g}",
                "" if r[5] is None else int(r[5]),
            ])
