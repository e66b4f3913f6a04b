"""Network-parameterized lattice systems: residual-in-weights assembly and solves."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lattice import (LatticeSpec, StateField, norm_prefactor,
                      norm_prefactor_derivative)
from .network import (InputMode, NetworkShape, _core, _core_jacobian,
                      init_weights, mask_values, transform_indices)
from .solver import LMConfig, SubsetSpec, lm_solve, stochastic_lm_solve


def default_mode(spec: LatticeSpec) -> InputMode:
    """Fold-sorted inputs everywhere; the sine mask only in five dimensions."""
    return InputMode(mode="fold_sorted", masked=spec.d == 5, absolute=False)


class PinnProblem:
    """Couples a lattice spec with a network: f_i(u(i, W), mu) over the interior.

    Transformed inputs, mask factors, and the stencil neighbor table are cached
    at construction. With mu=None the parameter is a trainable trailing entry
    of the weight vector.
    """

    def __init__(self, spec: LatticeSpec, shape: NetworkShape,
                 mode: Optional[InputMode] = None, mu: Optional[float] = None):
        if shape.d_in != spec.d:
            raise ValueError(f"network d_in={shape.d_in} != lattice d={spec.d}")
        self.spec = spec
        self.shape = shape
        self.mode = default_mode(spec) if mode is None else mode
        self.mu = mu
        self.n_interior = spec.n_interior
        self.inputs = transform_indices(spec, spec.interior_indices(), self.mode)
        if self.mode.masked:
            norm_mode = InputMode(mode="normalized")
            normalized = transform_indices(spec, spec.interior_indices(), norm_mode)
            self.mask = mask_values(normalized)
        else:
            self.mask = None
        self.neighbors = spec.neighbor_table()
        # adjacency matmul beats 2d gathers for full-system Jacobians
        self.adjacency = spec.adjacency() if spec.d <= 4 else None

    @property
    def augmented(self) -> bool:
        return self.mu is None

    @property
    def n_unknowns(self) -> int:
        return self.shape.n_params + (1 if self.augmented else 0)

    def mu_of(self, w: np.ndarray) -> float:
        return float(w[-1]) if self.augmented else self.mu

    # -- network evaluation over cached lattice inputs --

    def interior_values(self, w: np.ndarray, rows=None):
        """Masked network output at cached interior points (all or a row subset)."""
        X = self.inputs if rows is None else self.inputs[rows]
        u, _ = _core(self.shape, w[:self.shape.n_params], X)
        if self.mask is not None:
            u = u * (self.mask if rows is None else self.mask[rows])
        return u

    def interior_values_jac(self, w: np.ndarray, rows=None):
        X = self.inputs if rows is None else self.inputs[rows]
        u, cache = _core(self.shape, w[:self.shape.n_params], X)
        J = _core_jacobian(self.shape, X, cache)
        if self.mask is not None:
            m = self.mask if rows is None else self.mask[rows]
            u = u * m
            J = J * m[:, None]
        return u, J

    def to_state(self, w: np.ndarray) -> StateField:
        """Full-lattice evaluation with explicit zero boundary."""
        return StateField.from_interior(self.spec, self.interior_values(w))

    # -- residual / Jacobian assembly --

    def _subset_scatter(self, subset: np.ndarray):
        """Interior points touched by the subset stencils, with local row maps."""
        nbrs = self.neighbors[subset]
        points = np.unique(np.concatenate([subset, nbrs[nbrs >= 0]]))
        center_loc = np.searchsorted(points, subset)
        nbr_loc = np.where(nbrs >= 0,
                           np.searchsorted(points, np.where(nbrs >= 0, nbrs, 0)),
                           len(points))
        return points, center_loc, nbr_loc

    def assemble_residual(self, w: np.ndarray, subset=None) -> np.ndarray:
        """f_i = mu*u_i + c*lap(u)_i + 2u_i^3 - u_i^5 for all (or subset) rows."""
        mu = self.mu_of(w)
        c, d = self.spec.c, self.spec.d
        if subset is None:
            u = self.interior_values(w)
            upad = np.append(u, 0.0)
            lap = upad[self.neighbors[:, 0]]
            for k in range(1, 2 * d):
                lap = lap + upad[self.neighbors[:, k]]
            lap -= 2.0 * d * u
            uc = u
        else:
            points, center_loc, nbr_loc = self._subset_scatter(subset)
            upad = np.append(self.interior_values(w, points), 0.0)
            uc = upad[center_loc]
            lap = upad[nbr_loc].sum(axis=1) - 2.0 * d * uc
        return mu * uc + c * lap + 2.0 * uc**3 - uc**5

    def assemble_jacobian(self, w: np.ndarray, subset=None) -> np.ndarray:
        """Chain-rule d f/d w (and d f/d mu = u column when mu is trainable)."""
        mu = self.mu_of(w)
        c, d = self.spec.c, self.spec.d
        nW = self.shape.n_params
        if subset is None:
            u, Ju = self.interior_values_jac(w)
            diag = mu - 2.0 * d * c + 6.0 * u**2 - 5.0 * u**4
            Jf = diag[:, None] * Ju
            if self.adjacency is not None:
                Jf += c * (self.adjacency @ Ju)
            else:
                Jpad = np.vstack([Ju, np.zeros(nW)])
                for k in range(2 * d):
                    Jf += c * Jpad[self.neighbors[:, k]]
            uc = u
        else:
            points, center_loc, nbr_loc = self._subset_scatter(subset)
            u, Ju = self.interior_values_jac(w, points)
            upad = np.append(u, 0.0)
            Jpad = np.vstack([Ju, np.zeros(nW)])
            uc = upad[center_loc]
            diag = mu - 2.0 * d * c + 6.0 * uc**2 - 5.0 * uc**4
            Jf = diag[:, None] * Jpad[center_loc]
            for k in range(2 * d):
                Jf += c * Jpad[nbr_loc[:, k]]
        if not self.augmented:
            return Jf
        return np.hstack([Jf, uc[:, None]])

    def mse(self, w: np.ndarray) -> float:
        """Full-system mean squared residual, regardless of training subsets."""
        f = self.assemble_residual(w)
        return float(f @ f) / self.n_interior

    def norm_and_gradient(self, w: np.ndarray):
        """Solution norm with d norm/d w and d norm/d mu at the current weights."""
        mu = self.mu_of(w)
        u, Ju = self.interior_values_jac(w)
        pref = norm_prefactor(mu)
        sq = float(u @ u)
        grad_w = pref * 2.0 * (u @ Ju)
        grad_mu = norm_prefactor_derivative(mu) * sq
        return pref * sq, grad_w, grad_mu

    def solution_norm(self, w: np.ndarray, mu: Optional[float] = None) -> float:
        u = self.interior_values(w)
        return norm_prefactor(self.mu_of(w) if mu is None else mu) * float(u @ u)


def solve_fixed_mu(problem: PinnProblem, w0: np.ndarray, cfg: LMConfig,
                   sub: Optional[SubsetSpec] = None):
    """Root-solve f(u(., W), mu)=0 at fixed mu, full-system or stochastic."""
    if problem.augmented:
        raise ValueError("solve_fixed_mu needs a fixed-mu problem")
    if sub is None:
        return lm_solve(problem.assemble_residual, problem.assemble_jacobian, w0, cfg)
    return stochastic_lm_solve(problem.assemble_residual, problem.assemble_jacobian,
                               w0, cfg, sub, problem.n_interior,
                               test_fn=problem.mse)


# -- warm starts -------------------------------------------------------------

def fit_to_values(problem: PinnProblem, target: np.ndarray, cfg: LMConfig,
                  w0: Optional[np.ndarray] = None, seed: int = 0):
    """Least-squares fit of the (masked) network output to interior target values."""
    if w0 is None:
        w0 = init_weights(problem.shape, seed)
    w0 = w0[:problem.shape.n_params]

    def res(w):
        return problem.interior_values(w) - target

    def jac(w):
        return problem.interior_values_jac(w)[1]

    return lm_solve(res, jac, w0, cfg)


def bump_profile(spec: LatticeSpec, amplitude: float = 1.31, width: float = 36.0) -> np.ndarray:
    """Localized product-sech target on the interior, peaked at the lattice center.

    The default width matches the tail decay of the deeply pinned single-site
    state, which keeps the subsequent residual solve in that state's basin.
    """
    idx = spec.interior_indices()
    tbar = (idx - 1) / (spec.n - 1)
    return amplitude * np.prod(1.0 / np.cosh(width * (tbar - 0.5)), axis=1)


def onset_mu(spec: LatticeSpec) -> float:
    """Instability threshold of u=0: mu at which mu*I + c*lap loses definiteness."""
    return 4.0 * spec.d * spec.c * np.sin(np.pi / (2.0 * (spec.n - 1))) ** 2


def primary_profile(spec: LatticeSpec, mu: float) -> np.ndarray:
    """First-mode profile with cubic normal-form amplitude, valid just below onset."""
    idx = spec.interior_indices()
    tbar = (idx - 1) / (spec.n - 1)
    mode = np.prod(np.sin(np.pi * tbar), axis=1)
    s2 = float((mode**2).sum())
    s4 = float((mode**4).sum())
    amp_sq = (onset_mu(spec) - mu) * s2 / (2.0 * s4)
    return np.sqrt(max(amp_sq, 0.0)) * mode


def solve_on_primary_branch(problem: PinnProblem, mu_target: float, cfg: LMConfig,
                            seed: int = 0, mu_step: float = 0.005):
    """Land on the primary branch near onset, then walk mu down to the target.

    Each rung is a full fixed-mu solve warm-started from the previous one; the
    small step keeps every solve inside the branch's basin.
    """
    mu_start = onset_mu(problem.spec) - mu_step
    if mu_target >= mu_start:
        mu_start = mu_target
    fixed = PinnProblem(problem.spec, problem.shape, problem.mode, mu=mu_start)
    fit_cfg = LMConfig(max_iter=300, residual_tol=1e-24, seed=cfg.seed)
    w, _ = fit_to_values(fixed, primary_profile(problem.spec, mu_start), fit_cfg, seed=seed)
    mu = mu_start
    rung_cfg = LMConfig(lambda0=cfg.lambda0, up_factor=cfg.up_factor,
                        down_factor=cfg.down_factor, max_iter=cfg.max_iter,
                        residual_tol=max(cfg.residual_tol, 1e-30), seed=cfg.seed)
    trace = None
    while True:
        fixed.mu = mu
        w, trace = solve_fixed_mu(fixed, w, rung_cfg)
        if mu <= mu_target + 1e-12:
            break
        mu = max(mu - mu_step, mu_target)
    return w, trace


def write_comparison_csv(path, state_a: StateField, state_b: StateField,
                         label_a="pinn", label_b="direct"):
    """Per-point comparison of two lattice fields plus a max-abs summary row."""
    diff = np.abs(state_a.values - state_b.values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", label_a, label_b, "abs_diff"])
        for idx in np.ndindex(*state_a.values.shape):
            writer.writerow([
                " ".join(str(i + 1) for i in idx),
                f"{state_a.values[idx]:.17g}",
                f"{state_b.values[idx]:.17g}",
                f"{diff[idx]:.17g}",
            ])
        writer.writerow(["max_abs_diff", "", "", f"{diff.max():.17g}"])
    return float(diff.max())
