"""Cell-centred 1D mesh on (0, L) with homogeneous Neumann boundary.

Fields are plain float arrays of length ``n_cells``.  The Laplacian uses
reflected ghost cells, which makes it the exact negative gradient of the
discrete Dirichlet energy (summation by parts holds to rounding).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        # a single cell is allowed: it is the scalar (constant-in-space) problem
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.h

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_cells,):
            raise ValueError(f"field has shape {u.shape}, grid expects ({self.n_cells},)")
        return u


def laplacian_neumann(grid: Grid1D, u) -> np.ndarray:
    u = grid.check(u)
    out = np.zeros_like(u)
    if u.size == 1:
        return out
    d = np.diff(u)
    out[:-1] += d
    out[1:] -= d
    return out / grid.h ** 2


def laplacian_band(grid: Grid1D, lam: float = 1.0) -> np.ndarray:
    """Upper banded storage of ``-lam * Laplacian`` (for ``scipy.linalg.solveh_banded``)."""
    n = grid.n_cells
    k = lam / grid.h ** 2
    ab = np.zeros((2, n))
    diag = np.full(n, 2.0 * k)
    if n == 1:
        diag[:] = 0.0
    else:
        diag[0] = diag[-1] = k
    ab[1] = diag
    ab[0, 1:] = -k
    return ab


def lp_norm(grid: Grid1D, u, q: float = 2.0) -> float:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    u = grid.check(u)
    a = np.abs(u)
    if math.isinf(q):
        return float(a.max()) if a.size else 0.0
    return float(np.sum(a ** q) * grid.h) ** (1.0 / q)


def dirichlet_energy(grid: Grid1D, u) -> float:
    """``sum_edges ((u_{i+1} - u_i)/h)^2 h``, i.e. ``||grad u||^2`` without the 1/2."""
    u = grid.check(u)
    d = np.diff(u)
    return float(np.dot(d, d) / grid.h)


def gradient_pairing(grid: Grid1D, u, v) -> float:
    """Discrete ``int grad u . grad v``."""
    u = grid.check(u)
    v = grid.check(v)
    return float(np.dot(np.diff(u), np.diff(v)) / grid.h)


def inner(grid: Grid1D, u, v) -> float:
    return float(np.dot(u, v) * grid.h)
