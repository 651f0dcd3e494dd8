"""Generalised symmetric eigenproblems and an independent shooting oracle.

``solve_gsep`` works on the orthogonal complement of an optional linear
constraint, reduces K x = lambda M x to standard form by a Cholesky factor of
M and diagonalises with LAPACK. ``shooting_oracle`` never touches the finite
element matrices: it integrates the strong-form Sturm-Liouville equation
-(p y')' + V y = lambda w y from both ends and locates zeros of the matching
Wronskian.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretization import DiscreteForm
from .equilibrium import Equilibrium


class MassNotPD(np.linalg.LinAlgError):
    """Mass matrix is not positive definite on the constrained subspace."""


class NumericalBreakdown(RuntimeError):
    """The dense eigensolver returned non-finite output."""


def constraint_basis(n: int, c) -> np.ndarray:
    """Orthonormal basis of {x : c . x = 0} (identity when c is None)."""
    if c is None:
        return np.eye(n)
    Q, _ = np.linalg.qr(np.asarray(c, dtype=float)[:, None], mode="complete")
    return Q[:, 1:]


@dataclass(frozen=True)
class ModeSet:
    lambdas: np.ndarray
    vectors: np.ndarray            # columns, in the form's dof numbering
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)
    kernel: np.ndarray | None = None   # mask of numerically zero eigenvalues

    def __len__(self):
        return len(self.lambdas)

    def zero_mask(self, rel: float = 1e-5) -> np.ndarray:
        """Kernel flags plus eigenvalues that are zero up to discretisation
        error, i.e. below ``rel`` times the size of the lowest few."""
        if not len(self):
            return np.zeros(0, dtype=bool)
        scale = float(np.max(np.abs(self.lambdas[:5])))
        small = np.abs(self.lambdas) <= rel * scale
        return small if self.kernel is None else small | self.kernel

    def to_json(self, with_vectors: bool = False) -> dict:
        out = {"meta": {k: _jsonable(v) for k, v in self.meta.items()},
               "lambdas": [float(x) for x in self.lambdas],
               "residuals": [float(x) for x in self.residuals]}
        if with_vectors:
            out["vectors"] = self.vectors.T.tolist()
        return out

    def dumps(self, with_vectors: bool = False) -> str:
        return json.dumps(self.to_json(with_vectors), indent=1)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def solve_gsep(form: DiscreteForm, k: int | None = None,
               tol: float = 1e-10) -> ModeSet:
    """Lowest ``k`` (all when None) eigenpairs of (K, M) with c . x = 0.

    Vectors are M-orthonormal. ``residuals`` are
    ||Z^T (K x - lambda M x)|| / ((||K|| + |lambda| ||M||) ||x||) with
    Frobenius norms. ``kernel`` flags |lambda| <= 10 max(residual, eps) ||C||,
    C being the reduced standard matrix.
    """
    K, M = form.K, form.M
    Z = constraint_basis(K.shape[0], form.constraint)
    Kz = Z.T @ K @ Z
    Mz = Z.T @ M @ Z
    try:
        L = np.linalg.cholesky(Mz)
    except np.linalg.LinAlgError as exc:
        raise MassNotPD("mass matrix is not positive definite on the "
                        "constrained subspace") from exc
    n = Kz.shape[0]
    if k is None or k > n:
        k = n
    if k <= 0:
        return ModeSet(np.empty(0), np.empty((K.shape[0], 0)), np.empty(0),
                       dict(form.meta), np.empty(0, dtype=bool))
    Li = sla.solve_triangular(L, np.eye(n), lower=True)
    C = Li @ Kz @ Li.T
    C = 0.5 * (C + C.T)
    try:
        lam, V = sla.eigh(C, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalBreakdown(str(exc)) from exc
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(V))):
        raise NumericalBreakdown("non-finite eigenpairs")
    Xz = Li.T @ V
    X = Z @ Xz
    nK, nM = np.linalg.norm(K), np.linalg.norm(M)
    R = Kz @ Xz - (Mz @ Xz) * lam
    res = np.linalg.norm(R, axis=0) / ((nK + np.abs(lam) * nM)
                                      * np.linalg.norm(Xz, axis=0))
    # backward-stable eigenvalues are accurate to eps ||C||
    scale = max(float(np.linalg.norm(C)), 1e-300)
    ztol = 10.0 * np.maximum(res, np.finfo(float).eps) * scale
    meta = dict(form.meta)
    meta["tol"] = tol
    meta["max_residual"] = float(np.max(res))
    return ModeSet(lambdas=lam, vectors=X, residuals=res, meta=meta,
                   kernel=np.abs(lam) <= ztol)


def m_orthonormality_error(form: DiscreteForm, modes: ModeSet) -> float:
    G = modes.vectors.T @ form.M @ modes.vectors
    return float(np.max(np.abs(G - np.eye(G.shape[0])))) if G.size else 0.0


# -------------------------------------------------------------- shooting oracle

def _coefficients(eq: Equilibrium, kind: str, l: int):
    """(p, V, w) of -(p y')' + V y = lambda w y for the local operators."""
    g, fpg = eq.gamma, eq.four_pi_G

    def lss(r):
        pr = eq.profile(r)
        w = pr["rho"] * r**4
        return g * pr["P"] * r**4, -(3 * g - 4) * pr["du_dr"] / r * w, w

    def nl00(r):
        pr = eq.profile(r)
        c2 = (g - 1) * pr["u"]
        rho = pr["rho"]
        w = c2 / rho * r**2
        # closed polytrope form of the potential coefficient
        q = l * (l + 1) * c2 / r**2 - (3 - g) * fpg * rho
        return c2**2 * r**2 / rho, q * w, w

    def a_op(r):
        pr = eq.profile(r)
        u = np.where(pr["u"] > 0, pr["u"], 1.0)
        drho_du = np.where(pr["u"] > 0, pr["rho"] / ((g - 1) * u), 0.0)
        return r**2, 2.0 - fpg * drho_du * r**2, r**2

    return {"Lss": lss, "Nl00": nl00, "A": a_op}[kind]


def _shooting_grid(R: float, eps: float, ratio: float, n_mid: int,
                   edge: float = 0.05):
    """Radii geometric near both ends (steps proportional to the distance)
    and uniform in between; returns left and right halves meeting at R/2."""
    n_geo = int(math.ceil(math.log(edge * R / eps) / math.log1p(ratio)))
    geo = eps * (1 + ratio) ** np.arange(n_geo + 1)
    geo = geo[geo < edge * R]
    mid = np.linspace(edge * R, 0.5 * R, n_mid // 2 + 1)
    left = np.concatenate([geo, mid])
    return left, R - left


def _rk4_sweep(coef, rs, y0, z0, lam):
    """Integrate (y, z) along the radii ``rs`` for every lambda at once."""
    rs = np.asarray(rs)
    mids = 0.5 * (rs[:-1] + rs[1:])
    p0, V0, w0 = coef(rs)
    pm, Vm, wm = coef(mids)
    y, z = y0.copy(), z0.copy()
    for i in range(len(rs) - 1):
        h = rs[i + 1] - rs[i]
        a0, b0 = 1.0 / p0[i], V0[i] - lam * w0[i]
        am, bm = 1.0 / pm[i], Vm[i] - lam * wm[i]
        a1, b1 = 1.0 / p0[i + 1], V0[i + 1] - lam * w0[i + 1]
        k1y, k1z = a0 * z, b0 * y
        k2y, k2z = am * (z + 0.5 * h * k1z), bm * (y + 0.5 * h * k1y)
        k3y, k3z = am * (z + 0.5 * h * k2z), bm * (y + 0.5 * h * k2y)
        k4y, k4z = a1 * (z + h * k3z), b1 * (y + h * k3y)
        y = y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        z = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        s = np.maximum(np.abs(y), np.abs(z))
        y, z = y / s, z / s
    return y, z


@dataclass
class _Shooter:
    eq: Equilibrium
    kind: str
    l: int
    eps_rel: float = 1e-8
    ratio: float = 0.01
    n_mid: int = 4000

    def __post_init__(self):
        R = self.eq.R
        self.coef = _coefficients(self.eq, self.kind, self.l)
        eps = self.eps_rel * R
        self.left, self.right = _shooting_grid(R, eps, self.ratio, self.n_mid)
        if self.kind == "A":
            # regular endpoint: start exactly at R with the Dirichlet data
            self.right = np.concatenate([[R], self.right])

    def _start_left(self, lam):
        r = self.left[0]
        p, V, w = self.coef(np.array([r]))
        one = np.ones_like(lam)
        if self.kind == "A":
            return r * one, r**2 * one
        if self.kind == "Lss":
            # bounded branch y = 1, z = int_0^r (V - lam w) ~ (V - lam w) r / 5
            return one, (V[0] - lam * w[0]) * r / 5.0
        if self.l == 0:
            return one, (V[0] - lam * w[0]) * r / 3.0
        # regular Frobenius branch y ~ r^l
        return r**self.l * one, p[0] * self.l * r ** (self.l - 1) * one

    def _start_right(self, lam):
        R, nu = self.eq.R, self.eq.nu
        one = np.ones_like(lam)
        if self.kind == "A":
            return 0.0 * one, one
        r = self.right[0]
        s = R - r
        p, V, w = self.coef(np.array([r]))
        if self.kind == "Lss":
            # bounded branch; w ~ s^nu so int_r^R w ~ w s / (nu + 1)
            return one, -(V[0] - lam * w[0]) * s / (nu + 1)
        # principal branch: z = 1, y = -int_r^R dr / p with p ~ s^(2 - nu)
        return -s / ((nu - 1) * p[0]) * one, one

    def wronskian(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        yl, zl = _rk4_sweep(self.coef, self.left, *self._start_left(lam), lam)
        yr, zr = _rk4_sweep(self.coef, self.right, *self._start_right(lam),
                            lam)
        return yl * zr - yr * zl


def shooting_oracle(eq: Equilibrium, operator_kind: str, l: int,
                    window: tuple[float, float], n_sweep: int = 400,
                    rtol: float = 1e-8, n_split: int = 16,
                    **grid_opts) -> list[float]:
    """Eigenvalues in ``window`` from sign changes of the matching Wronskian.

    Brackets are refined by vectorised multisection (``n_split`` interior
    points per bracket and pass) until their width is below ``rtol`` times
    the magnitude of the eigenvalue.
    """
    if operator_kind not in ("Lss", "Nl00", "A"):
        raise ValueError("shooting handles the local operators Lss, Nl00, A")
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("window must be a finite interval")
    sh = _Shooter(eq, operator_kind, l, **grid_opts)
    lam = np.linspace(lo, hi, n_sweep + 1)
    W = sh.wronskian(lam)
    idx = np.nonzero(np.sign(W[:-1]) * np.sign(W[1:]) < 0)[0]
    a, b = lam[idx], lam[idx + 1]
    wa, wb = W[idx], W[idx + 1]
    t = np.linspace(0.0, 1.0, n_split + 2)[1:-1]
    rows = np.arange(len(a))
    while len(a) and np.any(b - a > rtol * np.maximum(np.abs(a), 1e-3)):
        pts = a[:, None] + (b - a)[:, None] * t
        Wp = sh.wronskian(pts.ravel()).reshape(pts.shape)
        vals = np.concatenate([wa[:, None], Wp, wb[:, None]], axis=1)
        grid = np.concatenate([a[:, None], pts, b[:, None]], axis=1)
        change = np.sign(vals[:, :-1]) * np.sign(vals[:, 1:]) <= 0
        j = change.argmax(axis=1)
        a, b = grid[rows, j], grid[rows, j + 1]
        wa, wb = vals[rows, j], vals[rows, j + 1]
    return sorted(float(x) for x in 0.5 * (a + b))
