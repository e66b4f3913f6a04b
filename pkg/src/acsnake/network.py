"""Shallow Gaussian-activation network: transforms, forward pass, weight Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeSpec

INPUT_MODES = ("raw", "normalized", "fold_sorted")


@dataclass(frozen=True)
class NetworkShape:
    """Two-hidden-layer feedforward shape (d_in, h1, h2, 1)."""

    d_in: int
    h1: int
    h2: int

    def __post_init__(self):
        if not 1 <= self.d_in <= 5:
            raise ValueError(f"d_in must be in 1..5, got {self.d_in}")
        if self.h1 < 1 or self.h2 < 1:
            raise ValueError("hidden layer sizes must be positive")

    @property
    def n_params(self) -> int:
        return (self.d_in + 1) * self.h1 + (self.h1 + 1) * self.h2 + (self.h2 + 1)

    @classmethod
    def from_string(cls, text: str) -> "NetworkShape":
        parts = [int(p) for p in text.replace(" ", "").split(",")]
        if len(parts) != 4 or parts[3] != 1:
            raise ValueError(f"network shape must be 'd,h1,h2,1', got {text!r}")
        return cls(parts[0], parts[1], parts[2])

    def __str__(self):
        return f"{self.d_in},{self.h1},{self.h2},1"


@dataclass(frozen=True)
class InputMode:
    """Input transform selection plus boundary mask and eigen-mode flags."""

    mode: str = "fold_sorted"
    masked: bool = False
    absolute: bool = False

    def __post_init__(self):
        if self.mode not in INPUT_MODES:
            raise ValueError(f"mode must be one of {INPUT_MODES}, got {self.mode!r}")
        if self.masked and self.mode == "raw":
            raise ValueError("masked output requires normalized or fold_sorted inputs")


def init_weights(shape: NetworkShape, seed: int) -> np.ndarray:
    """Seeded i.i.d. uniform [-1, 1] flat weight vector (no augmented slot)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, shape.n_params)


def unpack_weights(shape: NetworkShape, w: np.ndarray):
    """Split the flat vector into (W1, b1, W2, b2, W3, b3)."""
    d, h1, h2 = shape.d_in, shape.h1, shape.h2
    o = 0
    W1 = w[o:o + d * h1].reshape(d, h1); o += d * h1
    b1 = w[o:o + h1]; o += h1
    W2 = w[o:o + h1 * h2].reshape(h1, h2); o += h1 * h2
    b2 = w[o:o + h2]; o += h2
    W3 = w[o:o + h2]; o += h2
    b3 = w[o]
    return W1, b1, W2, b2, W3, b3


def transform_indices(spec: LatticeSpec, indices: np.ndarray, mode: InputMode) -> np.ndarray:
    """Transformed network inputs for a batch of 1-based multi-indices, shape (N, d).

    normalized maps {1..n} onto [0,1]; fold_sorted reflects about the midpoint in
    integer index space (exactly reflection-invariant) and sorts the coordinates.
    """
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    n = spec.n
    if mode.mode == "raw":
        return idx.astype(float)
    if mode.mode == "normalized":
        return (idx - 1) / (n - 1)
    folded = np.minimum(idx, n + 1 - idx)
    return np.sort((folded - 1) / (n - 1), axis=1)


def transform_index(spec: LatticeSpec, idx, mode: InputMode) -> np.ndarray:
    """Single-index version of transform_indices."""
    return transform_indices(spec, np.asarray(idx).reshape(1, -1), mode)[0]


def _sinpi01(t: np.ndarray) -> np.ndarray:
    """sin(pi*t) on [0,1], exactly zero at both endpoints."""
    return np.sin(np.pi * np.minimum(t, 1.0 - t))


def mask_values(coords: np.ndarray) -> np.ndarray:
    """Boundary mask prod_k sin(pi t_k) from [0,1]-normalized coordinates."""
    return np.prod(_sinpi01(np.atleast_2d(coords)), axis=1)


def _core(shape: NetworkShape, w: np.ndarray, X: np.ndarray):
    """Raw two-layer Gaussian forward pass; returns (u, layer cache)."""
    W1, b1, W2, b2, W3, b3 = unpack_weights(shape, w)
    z1 = X @ W1 + b1
    a1 = np.exp(-0.5 * z1 * z1)
    z2 = a1 @ W2 + b2
    a2 = np.exp(-0.5 * z2 * z2)
    u = a2 @ W3 + b3
    return u, (z1, a1, z2, a2, W2, W3)


def _core_jacobian(shape: NetworkShape, X: np.ndarray, cache) -> np.ndarray:
    """Analytic du/dw for the raw forward pass, one row per batch point."""
    z1, a1, z2, a2, W2, W3 = cache
    N = X.shape[0]
    d, h1, h2 = shape.d_in, shape.h1, shape.h2
    G2 = (-z2 * a2) * W3              # du/dz2
    G1 = (G2 @ W2.T) * (-z1 * a1)     # du/dz1
    J = np.empty((N, shape.n_params))
    o = 0
    J[:, o:o + d * h1] = (X[:, :, None] * G1[:, None, :]).reshape(N, d * h1); o += d * h1
    J[:, o:o + h1] = G1; o += h1
    J[:, o:o + h1 * h2] = (a1[:, :, None] * G2[:, None, :]).reshape(N, h1 * h2); o += h1 * h2
    J[:, o:o + h2] = G2; o += h2
    J[:, o:o + h2] = a2; o += h2
    J[:, o] = 1.0
    return J


def forward(shape: NetworkShape, w: np.ndarray, coords: np.ndarray, mode: InputMode):
    """Network output for transformed coordinates (batch or single point).

    Applies the boundary mask (from the passed coordinates) when mode.masked and
    the absolute-value wrap when mode.absolute.
    """
    single = np.asarray(coords).ndim == 1
    X = np.atleast_2d(np.asarray(coords, dtype=float))
    u, _ = _core(shape, w[:shape.n_params], X)
    if mode.masked:
        u = u * mask_values(X)
    if mode.absolute:
        u = np.abs(u)
    return float(u[0]) if single else u


def weight_jacobian(shape: NetworkShape, w: np.ndarray, coords: np.ndarray,
                    mode: InputMode) -> np.ndarray:
    """Exact d(output)/d(weights), shape (batch, n_params).

    In masked mode rows scale by the mask; in absolute mode rows carry the sign
    of the pre-absolute output (zero at exactly zero).
    """
    X = np.atleast_2d(np.asarray(coords, dtype=float))
    u, cache = _core(shape, w[:shape.n_params], X)
    J = _core_jacobian(shape, X, cache)
    if mode.masked:
        J = J * mask_values(X)[:, None]
    if mode.absolute:
        J = J * np.sign(u)[:, None]
    return J


def save_weights(path, shape: NetworkShape, w: np.ndarray, augmented: bool):
    """One value per line after a `d h1 h2 1 augmented` header."""
    with open(path, "w") as fh:
        fh.write(f"{shape.d_in} {shape.h1} {shape.h2} 1 {int(augmented)}\n")
        for v in np.asarray(w):
            fh.write(f"{v:.17g}\n")


def load_weights(path):
    """Inverse of save_weights; returns (shape, weights, augmented)."""
    with open(path) as fh:
        head = fh.readline().split()
        shape = NetworkShape(int(head[0]), int(head[1]), int(head[2]))
        augmented = bool(int(head[4]))
        w = np.array([float(line) for line in fh if line.strip()])
    expected = shape.n_params + (1 if augmented else 0)
    if len(w) != expected:
        raise ValueError(f"expected {expected} weights, found {len(w)}")
    return shape, w, augmented
