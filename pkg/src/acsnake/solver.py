"""Levenberg-Marquardt root finder, full and mini-batch stochastic variants."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

DAMPING_MIN = 1e-15
DAMPING_MAX = 1e15


@dataclass
class LMConfig:
    """Damping schedule and termination settings.

    residual_tol is an MSE threshold on the (batch) residual; step_tol bounds
    the accepted step norm. Zero disables the respective test.
    """

    lambda0: float = 1e-3
    up_factor: float = 3.0
    down_factor: float = 0.3
    max_iter: int = 1000
    residual_tol: float = 0.0
    step_tol: float = 0.0
    seed: int = 0
    max_rejections: int = 20

    def __post_init__(self):
        if not (self.up_factor > 1.0 > self.down_factor > 0.0):
            raise ValueError("need up_factor > 1 > down_factor > 0")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")


@dataclass
class SubsetSpec:
    """Per-iteration equation subset: size, always-included rows, RNG seed."""

    size: int
    mandatory: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.size < len(self.mandatory):
            raise ValueError("subset size smaller than the mandatory set")


@dataclass
class TraceRecord:
    iteration: int
    damping: float
    batch_mse: float
    step_norm: float
    full_mse: Optional[float] = None


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    termination: str = "max_iter"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "damping", "batch_mse", "full_mse", "step_norm"])
            for r in self.records:
                writer.writerow([
                    r.iteration,
                    f"{r.damping:.17g}",
                    f"{r.batch_mse:.17g}",
                    "" if r.full_mse is None else f"{r.full_mse:.17g}",
                    f"{r.step_norm:.17g}",
                ])

    @property
    def final_mse(self) -> float:
        return self.records[-1].batch_mse if self.records else float("nan")


class SolverFailure(RuntimeError):
    """Raised when damping or rejection limits are exhausted; carries the trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def _solve_normal(J, F, damping: float) -> np.ndarray:
    """Solve (J^T J + damping I) s = -J^T F for dense or sparse J."""
    if sp.issparse(J):
        A = (J.T @ J + damping * sp.identity(J.shape[1], format="csr")).tocsc()
        return splu(A).solve(-(J.T @ F))
    A = J.T @ J
    A[np.diag_indices_from(A)] += damping
    cf = cho_factor(A, check_finite=False)
    return cho_solve(cf, -(J.T @ F), check_finite=False)


def _run_lm(residual_fn, jacobian_fn, x0, cfg: LMConfig,
            subset_provider=None, test_fn=None, test_every=10,
            converged: Optional[Callable[[np.ndarray], bool]] = None):
    """Shared LM engine; subset_provider switches to the stochastic variant."""
    x = np.array(x0, dtype=float)
    damping = cfg.lambda0
    trace = SolveTrace()
    subset = None

    def _res(xv):
        return residual_fn(xv) if subset is None else residual_fn(xv, subset)

    def _jac(xv):
        return jacobian_fn(xv) if subset is None else jacobian_fn(xv, subset)

    F = None
    if subset_provider is None:
        F = _res(x)
        if converged is not None and converged(F):
            trace.termination = "converged"
            return x, trace
        if cfg.residual_tol > 0 and float(F @ F) / len(F) <= cfg.residual_tol:
            trace.termination = "residual_tol"
            return x, trace

    for it in range(1, cfg.max_iter + 1):
        if subset_provider is not None:
            subset = subset_provider(it)
            F = _res(x)
        cost = float(F @ F)
        J = _jac(x)
        g = None
        rejections = 0
        accepted = False
        while True:
            try:
                step = _solve_normal(J, F, damping)
            except (np.linalg.LinAlgError, RuntimeError):
                step = None
            if step is not None:
                x_try = x + step
                F_try = _res(x_try)
                cost_try = float(F_try @ F_try)
                if cost_try <= cost:
                    used_damping = damping
                    x = x_try
                    F = F_try
                    cost = cost_try
                    damping = max(damping * cfg.down_factor, DAMPING_MIN)
                    accepted = True
                    break
            damping *= cfg.up_factor
            rejections += 1
            if damping > DAMPING_MAX:
                trace.termination = "damping_overflow"
                raise SolverFailure("damping exceeded {:g}".format(DAMPING_MAX), trace)
            if rejections > cfg.max_rejections:
                trace.termination = "rejection_limit"
                raise SolverFailure(
                    f"no acceptable step after {rejections} rejections", trace)
        batch_mse = cost / len(F)
        full = None
        if test_fn is not None and (it % test_every == 0 or it == cfg.max_iter):
            full = float(test_fn(x))
        trace.records.append(TraceRecord(it, used_damping, batch_mse,
                                         float(np.linalg.norm(step)), full))
        if converged is not None and converged(F):
            trace.termination = "converged"
            return x, trace
        if cfg.residual_tol > 0 and batch_mse <= cfg.residual_tol:
            trace.termination = "residual_tol"
            return x, trace
        if cfg.step_tol > 0 and float(np.linalg.norm(step)) <= cfg.step_tol:
            trace.termination = "step_tol"
            return x, trace
    trace.termination = "max_iter"
    return x, trace


def lm_solve(residual_fn, jacobian_fn, x0, cfg: LMConfig, converged=None):
    """Damped LM iteration x <- x - (J^T J + damping I)^(-1) J^T F.

    Steps are accepted only when they do not increase ||F||; rejected steps
    raise the damping and retry. Returns the final (best) iterate and trace.
    """
    return _run_lm(residual_fn, jacobian_fn, x0, cfg, converged=converged)


def sample_subset(total: int, spec: SubsetSpec, iteration: int = 0) -> np.ndarray:
    """Sorted subset of equation indices: mandatory rows plus a uniform draw.

    Deterministic in (spec.seed, iteration); the full index set is returned in
    order when size == total.
    """
    if spec.size > total:
        raise ValueError(f"subset size {spec.size} exceeds total {total}")
    mandatory = np.asarray(sorted(spec.mandatory), dtype=np.int64)
    if mandatory.size and (mandatory[0] < 0 or mandatory[-1] >= total):
        raise ValueError("mandatory indices out of range")
    if spec.size == total:
        return np.arange(total, dtype=np.int64)
    rng = np.random.default_rng([spec.seed & 0x7FFFFFFF, iteration])
    allowed = np.ones(total, dtype=bool)
    allowed[mandatory] = False
    rest = np.flatnonzero(allowed)
    draw = rng.choice(rest, size=spec.size - mandatory.size, replace=False)
    return np.sort(np.concatenate([mandatory, draw]))


def stochastic_lm_solve(residual_fn, jacobian_fn, x0, cfg: LMConfig,
                        sub: SubsetSpec, total: int,
                        test_fn=None, test_every=10):
    """LM restricted to a fresh random equation subset S_k each iteration.

    residual_fn/jacobian_fn take (x, subset). Acceptance is judged on the
    batch residual; test_fn (full-system MSE) is recorded every test_every
    iterations in the trace.
    """
    provider = lambda it: sample_subset(total, sub, it)
    return _run_lm(residual_fn, jacobian_fn, x0, cfg,
                   subset_provider=provider, test_fn=test_fn, test_every=test_every)
