"""Radial grids, Gauss quadrature and weak-form assembly for P1 elements.

All matrices are dense. Hat function phi_i is attached to node r_i; on a
cell [r_i, r_{i+1}] only phi_i and phi_{i+1} are nonzero, so local 2x2
blocks are scattered into a tridiagonal pattern.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

GAUSS_POINTS = 4


class ConstraintDegenerate(ValueError):
    """Zero-mean constraint vector vanishes identically."""


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    p: float = 2.0

    @property
    def N(self) -> int:
        return len(self.nodes) - 1

    @property
    def R(self) -> float:
        return float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def quadrature(self, n: int = GAUSS_POINTS):
        """Gauss-Legendre points and weights per cell, shape (N, n)."""
        x, w = np.polynomial.legendre.leggauss(n)
        a, b = self.nodes[:-1, None], self.nodes[1:, None]
        pts = 0.5 * (b - a) * x + 0.5 * (a + b)
        wts = 0.5 * (b - a) * w
        return pts, wts

    def hats(self, n: int = GAUSS_POINTS):
        """Values of the left and right hat on each cell at the Gauss points."""
        x, _ = np.polynomial.legendre.leggauss(n)
        right = 0.5 * (1.0 + x)
        return 1.0 - right, right

    def interpolate(self, values, n: int = GAUSS_POINTS) -> np.ndarray:
        """P1 interpolant of nodal values at the Gauss points."""
        left, right = self.hats(n)
        v = np.asarray(values)
        return v[:-1, None] * left + v[1:, None] * right

    def slopes(self, values) -> np.ndarray:
        return np.diff(np.asarray(values)) / self.widths


def make_grid(R: float, N: int, p: float = 2.0) -> RadialGrid:
    """Nodes r_i = R (1 - (1 - i/N)^p), clustered towards r = R for p > 1."""
    if N < 1 or p < 1:
        raise ValueError("need N >= 1 and p >= 1")
    s = 1.0 - np.arange(N + 1) / N
    nodes = R * (1.0 - s**p)
    nodes[0], nodes[-1] = 0.0, R
    return RadialGrid(nodes=nodes, p=float(p))


WEIGHT_TAGS = ("W_space", "Y_space", "X_beta", "rho_r2", "plain_r2",
               "E_space")


@dataclass(frozen=True)
class WeightKind:
    """Named radial weight w(r), so that the inner product is int f g w dr.

    E_space is rho d(rho)/dP r^2, the weight of the zero-mean condition for
    potentials of the degenerate elliptic problem.
    """

    tag: str
    beta: float = 0.0

    def __post_init__(self):
        if self.tag not in WEIGHT_TAGS:
            raise ValueError(f"unknown weight {self.tag!r}")

    def __call__(self, eq, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.tag == "plain_r2":
            return r**2
        if self.tag == "X_beta":
            return np.clip(eq.R - r, 0.0, None) ** self.beta * r**2
        prof = eq.profile(r)
        rho = prof["rho"]
        if self.tag == "W_space":
            return rho * r**4
        if self.tag == "rho_r2":
            return rho * r**2
        if self.tag == "Y_space":
            # (1/rho) dP/drho = (gamma-1) u / rho, singular at r = R
            return (eq.gamma - 1.0) * prof["u"] / rho * r**2
        return rho / ((eq.gamma - 1.0) * prof["u"]) * r**2


W_SPACE = WeightKind("W_space")
Y_SPACE = WeightKind("Y_space")
RHO_R2 = WeightKind("rho_r2")
PLAIN_R2 = WeightKind("plain_r2")
E_SPACE = WeightKind("E_space")


def _scatter(diag_l, diag_r, off, n):
    """Tridiagonal dense matrix from per-cell local blocks."""
    M = np.zeros((n, n))
    idx = np.arange(n - 1)
    M[idx, idx] += diag_l
    M[idx + 1, idx + 1] += diag_r
    M[idx, idx + 1] += off
    M[idx + 1, idx] += off
    return M


def mass_from_values(grid: RadialGrid, wq: np.ndarray) -> np.ndarray:
    """Gram matrix int phi_i phi_j f dr with f given at the Gauss points."""
    _, wts = grid.quadrature()
    left, right = grid.hats()
    fw = wq * wts
    return _scatter(fw @ left**2, fw @ right**2, fw @ (left * right),
                    grid.N + 1)


def stiffness_from_values(grid: RadialGrid, aq: np.ndarray) -> np.ndarray:
    """int a phi_i' phi_j' dr with a given at the Gauss points."""
    _, wts = grid.quadrature()
    s = np.sum(aq * wts, axis=1) / grid.widths**2
    return _scatter(s, s, -s, grid.N + 1)


def weighted_mass(grid: RadialGrid, weight: WeightKind, eq=None) -> np.ndarray:
    pts, _ = grid.quadrature()
    return mass_from_values(grid, weight(eq, pts))


def weighted_stiffness(grid: RadialGrid, a, c=None, weight_for_potential=None,
                       eq=None) -> np.ndarray:
    """K_ij = int a phi_i' phi_j' dr + int c phi_i phi_j w dr.

    ``a`` and ``c`` are vectorised callables of r. No boundary condition is
    imposed; callers restrict to a subset of nodes when they need one.
    """
    pts, _ = grid.quadrature()
    K = stiffness_from_values(grid, np.asarray(a(pts), dtype=float)
                              * np.ones_like(pts))
    if c is not None:
        w = (weight_for_potential(eq, pts) if weight_for_potential is not None
             else np.ones_like(pts))
        K += mass_from_values(grid, np.asarray(c(pts), dtype=float) * w)
    return K


def load_vector(grid: RadialGrid, fq: np.ndarray) -> np.ndarray:
    """b_i = int phi_i f dr with f at the Gauss points."""
    _, wts = grid.quadrature()
    left, right = grid.hats()
    fw = fq * wts
    b = np.zeros(grid.N + 1)
    b[:-1] += fw @ left
    b[1:] += fw @ right
    return b


@dataclass(frozen=True)
class DiscreteForm:
    """Symmetric pencil (K, M) on the nodes listed in ``dofs``."""

    K: np.ndarray
    M: np.ndarray
    grid: RadialGrid
    inner_product: str
    dofs: np.ndarray
    constraint: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    asymmetry: float = 0.0
    aux: dict = field(default_factory=dict, repr=False, compare=False)

    def full_vector(self, x) -> np.ndarray:
        """Embed a dof vector into nodal values (eliminated nodes are 0)."""
        out = np.zeros(self.grid.N + 1)
        out[self.dofs] = x
        return out


def symmetrize(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Return the symmetric part of A and ||A - A^T|| / ||A||."""
    nrm = np.linalg.norm(A)
    asym = float(np.linalg.norm(A - A.T) / nrm) if nrm > 0 else 0.0
    return 0.5 * (A + A.T), asym


def apply_zero_mean_constraint(form: DiscreteForm, c_weight: WeightKind,
                               eq=None) -> DiscreteForm:
    """Attach c_i = int phi_i w_c dr; solvers work on the complement of c."""
    pts, _ = form.grid.quadrature()
    c = load_vector(form.grid, c_weight(eq, pts))[form.dofs]
    if not np.any(c):
        raise ConstraintDegenerate("constraint vector is identically zero")
    return replace(form, constraint=c)


def export_csv(matrix: np.ndarray, out=None, tol: float = 0.0) -> str:
    """Nonzero entries as CSV rows i,j,value (row-major)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "value"])
    rows, cols = np.nonzero(np.abs(matrix) > tol)
    for i, j in zip(rows, cols):
        w.writerow([int(i), int(j), repr(float(matrix[i, j]))])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text
