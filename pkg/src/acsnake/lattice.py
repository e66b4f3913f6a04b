"""Discrete Allen-Cahn lattice: specs, states, residuals, Jacobians, norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

CENTERINGS = ("site", "bond")


@dataclass(frozen=True)
class LatticeSpec:
    """Cubic lattice for the cubic-quintic Allen-Cahn system with zero boundaries.

    Per-axis size is n = 2m-1 (site-centered) or n = 2m (bond-centered).
    Interior indices run over {2, ..., n-1}^d, 1-based, in lexicographic order.
    """

    d: int
    m: int
    centering: str
    c: float

    def __post_init__(self):
        if not 1 <= self.d <= 5:
            raise ValueError(f"dimension must be in 1..5, got {self.d}")
        if self.m < 2:
            raise ValueError(f"half-width m must be >= 2, got {self.m}")
        if self.centering not in CENTERINGS:
            raise ValueError(f"centering must be one of {CENTERINGS}, got {self.centering!r}")
        if not self.c > 0:
            raise ValueError(f"coupling c must be positive, got {self.c}")

    @property
    def n(self) -> int:
        return 2 * self.m - 1 if self.centering == "site" else 2 * self.m

    @property
    def n_interior(self) -> int:
        return (self.n - 2) ** self.d

    def interior_indices(self) -> np.ndarray:
        """All interior multi-indices, shape (n_interior, d), lexicographic."""
        axes = [np.arange(2, self.n)] * self.d
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def neighbor_table(self) -> np.ndarray:
        """Interior-flat index of each stencil neighbor, -1 when on the boundary.

        Shape (n_interior, 2d); columns ordered axis-major, minus before plus.
        """
        idx = self.interior_indices()
        na = idx.shape[0]
        dims = (self.n - 2,) * self.d
        zero_based = idx - 2
        table = np.empty((na, 2 * self.d), dtype=np.int64)
        for ax in range(self.d):
            for slot, sgn in enumerate((-1, 1)):
                nb = zero_based.copy()
                nb[:, ax] += sgn
                outside = (nb[:, ax] < 0) | (nb[:, ax] >= self.n - 2)
                flat = np.ravel_multi_index(tuple(np.clip(nb, 0, self.n - 3).T), dims)
                flat[outside] = -1
                table[:, 2 * ax + slot] = flat
        return table

    def adjacency(self) -> sp.csr_matrix:
        """Sparse 0/1 interior adjacency (boundary neighbors dropped)."""
        nbr = self.neighbor_table()
        na = nbr.shape[0]
        rows = np.repeat(np.arange(na), 2 * self.d)
        cols = nbr.ravel()
        keep = cols >= 0
        return sp.csr_matrix(
            (np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(na, na)
        )


def build_spec(d: int, m: int, centering: str, c: float) -> LatticeSpec:
    """Validated LatticeSpec with derived size n and interior index set."""
    return LatticeSpec(d=d, m=m, centering=centering, c=c)


@dataclass
class ModelParams:
    """Bifurcation parameter of the lattice equation."""

    mu: float


@dataclass
class StateField:
    """Full-lattice field with explicitly stored zero boundary values."""

    spec: LatticeSpec
    values: np.ndarray

    def __post_init__(self):
        expected = (self.spec.n,) * self.spec.d
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != lattice shape {expected}")

    @classmethod
    def zeros(cls, spec: LatticeSpec) -> "StateField":
        return cls(spec, np.zeros((spec.n,) * spec.d))

    @classmethod
    def from_interior(cls, spec: LatticeSpec, interior: np.ndarray) -> "StateField":
        field = np.zeros((spec.n,) * spec.d)
        inner = (slice(1, spec.n - 1),) * spec.d
        field[inner] = np.asarray(interior).reshape((spec.n - 2,) * spec.d)
        return cls(spec, field)

    def interior_vector(self) -> np.ndarray:
        inner = (slice(1, self.spec.n - 1),) * self.spec.d
        return self.values[inner].ravel().copy()

    def boundary_max_abs(self) -> float:
        inner = (slice(1, self.spec.n - 1),) * self.spec.d
        mask = np.ones(self.values.shape, dtype=bool)
        mask[inner] = False
        return float(np.abs(self.values[mask]).max()) if mask.any() else 0.0

    def check_boundary(self):
        if self.boundary_max_abs() != 0.0:
            raise ValueError("boundary values must be exactly zero")


def laplacian_at(state: StateField, idx) -> float:
    """Unweighted d-dimensional stencil sum(neighbors) - 2d*u at one interior index."""
    spec = state.spec
    idx = tuple(int(i) for i in idx)
    if len(idx) != spec.d:
        raise ValueError(f"index must have {spec.d} components")
    if any(i <= 1 or i >= spec.n for i in idx):
        raise ValueError(f"index {idx} is not interior")
    zero_based = tuple(i - 1 for i in idx)
    total = -2.0 * spec.d * state.values[zero_based]
    for ax in range(spec.d):
        for sgn in (-1, 1):
            nb = list(zero_based)
            nb[ax] += sgn
            total += state.values[tuple(nb)]
    return float(total)


def _interior_laplacian(spec: LatticeSpec, values: np.ndarray) -> np.ndarray:
    """Vectorized unweighted Laplacian over the interior block, flattened C-order."""
    d, n = spec.d, spec.n
    inner = (slice(1, n - 1),) * d
    u = values[inner]
    lap = -2.0 * d * u
    for ax in range(d):
        lo = tuple(slice(1, n - 1) if a != ax else slice(0, n - 2) for a in range(d))
        hi = tuple(slice(1, n - 1) if a != ax else slice(2, n) for a in range(d))
        lap = lap + values[lo] + values[hi]
    return lap.ravel()


def residual(spec: LatticeSpec, state: StateField, params: ModelParams) -> np.ndarray:
    """Steady-state residual mu*u + c*lap(u) + 2u^3 - u^5 over the interior set."""
    u = state.interior_vector()
    lap = _interior_laplacian(spec, state.values)
    return params.mu * u + spec.c * lap + 2.0 * u**3 - u**5


def residual_interior(spec: LatticeSpec, u: np.ndarray, mu: float,
                      nbr: np.ndarray) -> np.ndarray:
    """Residual from an interior vector using a precomputed neighbor table."""
    upad = np.append(u, 0.0)
    lap = upad[nbr[:, 0]]
    for k in range(1, nbr.shape[1]):
        lap = lap + upad[nbr[:, k]]
    lap -= 2.0 * spec.d * u
    return mu * u + spec.c * lap + 2.0 * u**3 - u**5


def state_jacobian(spec: LatticeSpec, state: StateField, params: ModelParams) -> sp.csr_matrix:
    """Sparse d f/d u over the interior: diag(mu - 2dc + 6u^2 - 5u^4) + c*offdiag."""
    u = state.interior_vector()
    diag = params.mu - 2.0 * spec.d * spec.c + 6.0 * u**2 - 5.0 * u**4
    return (sp.diags(diag) + spec.c * spec.adjacency()).tocsr()


def linearized_operator(spec: LatticeSpec, state: StateField, params: ModelParams) -> sp.csr_matrix:
    """Symmetric operator of the linear-stability eigenproblem; equals state_jacobian."""
    return state_jacobian(spec, state, params)


def norm_prefactor(mu: float) -> float:
    if mu < -1.0:
        raise ValueError(f"solution norm needs mu >= -1, got {mu}")
    return 1.0 / (1.0 + np.sqrt(1.0 + mu))


def norm_prefactor_derivative(mu: float) -> float:
    """d/dmu of 1/(1+sqrt(1+mu)); diverges as mu -> -1."""
    root = np.sqrt(1.0 + mu)
    return -1.0 / (2.0 * root * (1.0 + root) ** 2)


def solution_norm(spec: LatticeSpec, state: StateField, params: ModelParams) -> float:
    """Weighted squared-amplitude norm sum(u^2)/(1+sqrt(1+mu)) over the full lattice."""
    return norm_prefactor(params.mu) * float((state.values**2).sum())


def save_state(path, state: StateField, mu: float):
    """Plain-text dump: header `d n centering c mu`, then rows `i1 .. id value`."""
    spec = state.spec
    with open(path, "w") as fh:
        fh.write(f"{spec.d} {spec.n} {spec.centering} {spec.c:.17g} {mu:.17g}\n")
        for idx in np.ndindex(*state.values.shape):
            coords = " ".join(str(i + 1) for i in idx)
            fh.write(f"{coords} {state.values[idx]:.17g}\n")


def load_state(path):
    """Inverse of save_state; returns (StateField, mu)."""
    with open(path) as fh:
        header = fh.readline().split()
        d, n = int(header[0]), int(header[1])
        centering = header[2]
        c, mu = float(header[3]), float(header[4])
        m = (n + 1) // 2 if centering == "site" else n // 2
        spec = build_spec(d, m, centering, c)
        if spec.n != n:
            raise ValueError(f"inconsistent header: n={n} for centering={centering}")
        values = np.zeros((n,) * d)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            idx = tuple(int(p) - 1 for p in parts[:d])
            values[idx] = float(parts[d])
    return StateField(spec, values), mu
