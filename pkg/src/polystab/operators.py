"""Radial operators of the linearised Euler-Poisson system for one degree l.

Conventions. A spheroidal (l, m) displacement is
xi = r psi Y e_r + r chi grad_S Y plus a toroidal part r kappa_t (e_r x grad_S Y),
so that ||xi||^2 = int rho r^4 (psi^2 + l(l+1)(chi^2 + kappa_t^2)) dr and
div(rho xi) = (1/r^2)(r^3 rho psi)' - l(l+1) rho chi.

The density perturbation g = div(rho xi) evolves under
N g = div(rho grad G), G = -(c^2/rho) g + 4 pi G_const H_l g, c^2 = dP/drho.

Full N_l is discretised through its energy pencil: the quadratic form
Q(g) = int (c^2/rho) g^2 r^2 - 4 pi G int (H_l g) g r^2 against the dual norm
<S_l^{-1} g, g>, where S_l is the weighted Laplacian of the potential problem
div(rho grad U) = f. Both sides are symmetric, and the eigenvalues are those
of N_l. The purely local part N_l00 keeps its Sturm-Liouville form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_jacobi

from .discretization import (PLAIN_R2, W_SPACE, Y_SPACE, E_SPACE,
                             DiscreteForm, RadialGrid, WeightKind,
                             apply_zero_mean_constraint, load_vector,
                             mass_from_values, stiffness_from_values,
                             symmetrize, weighted_mass)
from .equilibrium import Equilibrium
from .greens import green_at_gauss, green_at_nodes


class EndpointModelError(RuntimeError):
    """Profile near r = R does not follow u ~ K (R - r)."""


class IncompatibleSource(ValueError):
    """Degree-0 source with nonzero total mass."""


@dataclass(frozen=True)
class RadialField:
    """Nodal values on a grid, optionally with exact Gauss-point values.

    ``quad`` (shape (N, 4)) takes precedence in integrals; it carries fields
    that are not piecewise linear, e.g. gradients of a P1 potential.
    """

    grid: RadialGrid
    values: np.ndarray
    quad: np.ndarray | None = None

    def __post_init__(self):
        if len(self.values) != self.grid.N + 1:
            raise ValueError("field length does not match grid")

    def at_gauss(self) -> np.ndarray:
        if self.quad is not None:
            return self.quad
        return self.grid.interpolate(self.values)

    def __add__(self, other: "RadialField") -> "RadialField":
        q = (None if self.quad is None and other.quad is None
             else self.at_gauss() + other.at_gauss())
        return RadialField(self.grid, self.values + other.values, q)

    def __rmul__(self, a: float) -> "RadialField":
        return RadialField(self.grid, a * self.values,
                           None if self.quad is None else a * self.quad)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.N + 1))

    @classmethod
    def from_function(cls, grid, f):
        pts, _ = grid.quadrature()
        return cls(grid, np.asarray(f(grid.nodes), dtype=float),
                   np.asarray(f(pts), dtype=float))


@dataclass(frozen=True)
class VectorModeLM:
    l: int
    m: int
    psi: RadialField
    chi: RadialField
    kappa_t: RadialField

    def __post_init__(self):
        if abs(self.m) > self.l:
            raise ValueError("need |m| <= l")
        if self.l == 0 and (np.any(self.chi.at_gauss())
                            or np.any(self.kappa_t.at_gauss())):
            raise ValueError("degree 0 modes are purely radial")

    @classmethod
    def zeros(cls, grid, l, m=0):
        z = RadialField.zeros(grid)
        return cls(l, m, z, z, z)

    def __add__(self, other):
        return VectorModeLM(self.l, self.m, self.psi + other.psi,
                            self.chi + other.chi, self.kappa_t + other.kappa_t)

    def __rmul__(self, a):
        return VectorModeLM(self.l, self.m, a * self.psi, a * self.chi,
                            a * self.kappa_t)

    def component_norms(self, eq: Equilibrium) -> dict:
        """Weighted norms of psi, sqrt(l(l+1)) chi, sqrt(l(l+1)) kappa_t."""
        grid = self.psi.grid
        pts, wts = grid.quadrature()
        w = eq.profile(pts)["rho"] * pts**4 * wts
        ll = self.l * (self.l + 1)
        return {
            "psi": math.sqrt(np.sum(w * self.psi.at_gauss() ** 2)),
            "chi": math.sqrt(ll * np.sum(w * self.chi.at_gauss() ** 2)),
            "kappa_t": math.sqrt(ll * np.sum(w * self.kappa_t.at_gauss() ** 2)),
        }

    def norm(self, eq: Equilibrium) -> float:
        c = self.component_norms(eq)
        return math.sqrt(c["psi"] ** 2 + c["chi"] ** 2 + c["kappa_t"] ** 2)


@dataclass(frozen=True)
class LiouvilleData:
    l: int
    r: np.ndarray
    x_of_r: np.ndarray
    x_plus: float
    q_hat: np.ndarray
    kappa_const: float
    endpoint_class: str


# ---------------------------------------------------------------- coefficients

def kappa_forms(gamma: float) -> tuple[float, float, float]:
    """Three equivalent expressions of the endpoint constant kappa(gamma)."""
    g1 = gamma - 1.0
    return ((5 - 3 * gamma) * (3 - gamma) / (4 * g1**2),
            0.75 + (3 - 2 * gamma) / g1**2,
            -0.25 + (gamma - 2) ** 2 / g1**2)


def endpoint_class(gamma: float) -> str:
    return "LimitPoint" if kappa_forms(gamma)[0] >= 0.75 else "LimitCircle"


def frobenius_roots(l: int) -> tuple[int, int]:
    """Indicial roots (mu+, mu-) = ((1 +- (2l+1))/2) of r g ~ r^mu."""
    if l < 1:
        raise ValueError("need l >= 1")
    return ((1 + (2 * l + 1)) // 2, (1 - (2 * l + 1)) // 2)


def structural_coefficient(Gamma, rho=None, dGamma_drho=0.0):
    """3 (rho/Gamma) dGamma/drho + 3 Gamma - 4, the radial potential factor."""
    extra = 0.0 if rho is None else 3.0 * rho / Gamma * dGamma_drho
    return extra + 3.0 * Gamma - 4.0


def _profile_derivatives(eq: Equilibrium, r):
    """c^2, rho and their first two radial derivatives, analytically."""
    pr = eq.profile(r)
    g, nu = eq.gamma, eq.nu
    u, du, d2u, rho = pr["u"], pr["du_dr"], pr["d2u_dr2"], pr["rho"]
    with np.errstate(divide="ignore", invalid="ignore"):
        lu = np.where(u > 0, du / u, 0.0)
        drho = nu * rho * lu
        d2rho = nu * rho * (np.where(u > 0, d2u / u, 0.0) + (nu - 1) * lu**2)
    return {"c2": (g - 1) * u, "dc2": (g - 1) * du, "d2c2": (g - 1) * d2u,
            "rho": rho, "drho": drho, "d2rho": d2rho, "u": u, "du": du,
            "d2u": d2u}


def q_l_general(eq: Equilibrium, l: int, r):
    """q_l from its general expression in c^2 = dP/drho and rho."""
    r = np.asarray(r, dtype=float)
    d = _profile_derivatives(eq, r)
    c2, dc2, d2c2 = d["c2"], d["dc2"], d["d2c2"]
    rho, drho, d2rho = d["rho"], d["drho"], d["d2rho"]
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = drho / rho
        # -(rho/r^2) d/dr((r^2/rho) dc2/dr)
        t1 = -(d2c2 + (2.0 / r - lr) * dc2)
        # (1/r^2) d/dr((r^2/rho) drho/dr)
        t2 = 2.0 / r * lr - lr**2 + d2rho / rho
    return t1 + (t2 + l * (l + 1) / r**2) * c2 - eq.four_pi_G * rho


def q_l_polytrope(eq: Equilibrium, l: int, r):
    """Closed form of q_l for an exact polytrope."""
    r = np.asarray(r, dtype=float)
    pr = eq.profile(r)
    with np.errstate(divide="ignore"):
        return (l * (l + 1) * (eq.gamma - 1) * pr["u"] / r**2
                - (3 - eq.gamma) * eq.four_pi_G * pr["rho"])


def q_l_coefficient(eq: Equilibrium, l: int, r) -> dict:
    """q_l at r with the polytrope cross-check of its potential part.

    The potential part q_l - l(l+1) c^2/r^2 + 4 pi G rho must equal
    -Laplacian(dP/drho - u) = (2 - gamma) Laplacian(u) = -(2 - gamma) 4 pi G rho.
    At r = 0 the l >= 1 value is +inf (flagged); at r = R the limit is used.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0) or np.any(r > eq.R):
        raise ValueError("r outside [0, R]")
    inner = (r > 0) & (r < eq.R)
    q = np.empty_like(r)
    q[inner] = q_l_general(eq, l, r[inner])
    rho0 = eq.law.rho_center
    at0 = r == 0
    q[at0] = np.inf if l >= 1 else -(3 - eq.gamma) * eq.four_pi_G * rho0
    q[r == eq.R] = 0.0
    pr = eq.profile(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        pot = q - l * (l + 1) * (eq.gamma - 1) * pr["u"] / r**2 \
            + eq.four_pi_G * pr["rho"]
    identity = -(2 - eq.gamma) * eq.four_pi_G * pr["rho"]
    scale = eq.four_pi_G * rho0
    err = np.where(inner, np.abs(pot - identity) / scale, 0.0)
    return {"q": q, "potential_part": pot, "identity": identity,
            "max_rel_error": float(np.max(err)), "blowup_at_center": bool(
                l >= 1 and np.any(at0))}


# ------------------------------------------------------------------ assembly

def assemble_Lss(eq: Equilibrium, grid: RadialGrid) -> DiscreteForm:
    """Radial pulsation operator in the rho r^4 weighted space, natural
    condition at both ends."""
    pts, _ = grid.quadrature()
    pr = eq.profile(pts)
    coef = structural_coefficient(eq.gamma, pr["rho"], 0.0)
    K = stiffness_from_values(grid, eq.gamma * pr["P"] * pts**4)
    K += mass_from_values(grid, -coef * pr["du_dr"] / pts * pr["rho"] * pts**4)
    M = mass_from_values(grid, pr["rho"] * pts**4)
    K, asym = symmetrize(K)
    return DiscreteForm(K=K, M=M, grid=grid, inner_product="W_space",
                        dofs=np.arange(grid.N + 1), asymmetry=asym,
                        meta={"operator": "Lss", "l": 0, "gamma": eq.gamma})


def _y_dofs(grid: RadialGrid) -> np.ndarray:
    # g(R) = 0: the Y weight is not integrable at R for gamma <= 3/2 and the
    # endpoint has positive capacity, so the closure of compactly supported
    # functions vanishes there.
    return np.arange(grid.N)


def _require_finite_y_norm(eq: Equilibrium):
    # the Y weight grows like (R - r)^{1 - nu}; a hat vanishing linearly at R
    # has finite Y-norm only for nu < 4
    if eq.nu >= 4.0:
        raise ValueError(f"gamma={eq.gamma:.6g} (nu={eq.nu:.4g}): P1 densities "
                         "with g(R) = 0 have infinite Y-norm for nu >= 4, "
                         "need gamma > 5/4")


def assemble_Nl00(eq: Equilibrium, grid: RadialGrid, l: int) -> DiscreteForm:
    """Local part: int (c^4 r^2/rho) g'h' + int q_l (c^2/rho) g h r^2."""
    _require_finite_y_norm(eq)
    pts, _ = grid.quadrature()
    d = _profile_derivatives(eq, pts)
    a = d["c2"] ** 2 * pts**2 / d["rho"]
    wY = Y_SPACE(eq, pts)
    K = stiffness_from_values(grid, a)
    K += mass_from_values(grid, q_l_general(eq, l, pts) * wY)
    M = mass_from_values(grid, wY)
    dofs = _y_dofs(grid)
    K, asym = symmetrize(K[np.ix_(dofs, dofs)])
    return DiscreteForm(K=K, M=M[np.ix_(dofs, dofs)], grid=grid,
                        inner_product="Y_space", dofs=dofs, asymmetry=asym,
                        meta={"operator": "Nl00", "l": l, "gamma": eq.gamma})


def nonlocal_block(eq: Equilibrium, grid: RadialGrid, l: int):
    """B_ij = -4 pi G int H_l(phi_j) phi_i r^2 dr over all nodes.

    Returns the raw (unsymmetrised) matrix; H_l(phi_j) is exact for P1.
    """
    pts, wts = grid.quadrature()
    H, _ = green_at_gauss(grid, l, np.eye(grid.N + 1))
    left, right = grid.hats()
    W = wts * pts**2
    B = np.zeros((grid.N + 1, grid.N + 1))
    B[:-1] += np.einsum("cq,q,cqj->cj", W, left, H)
    B[1:] += np.einsum("cq,q,cqj->cj", W, right, H)
    return -eq.four_pi_G * B


def potential_stiffness(eq: Equilibrium, grid: RadialGrid, l: int):
    """S_ij = int rho phi_i' phi_j' r^2 dr + l(l+1) int rho phi_i phi_j dr."""
    pts, _ = grid.quadrature()
    rho = eq.profile(pts)["rho"]
    S = stiffness_from_values(grid, rho * pts**2)
    if l:
        S += l * (l + 1) * mass_from_values(grid, rho)
    return S


@dataclass(frozen=True)
class PotentialSolver:
    """Solves S_l U = b; for l = 0 the constant is fixed by a zero mean in
    the rho drho/dP weight via a bordered system."""

    S: np.ndarray
    l: int
    mean_weight: np.ndarray | None
    lu: tuple

    @classmethod
    def build(cls, eq, grid, l):
        S = potential_stiffness(eq, grid, l)
        if l == 0:
            pts, _ = grid.quadrature()
            e = load_vector(grid, E_SPACE(eq, pts))
            n = len(e)
            A = np.zeros((n + 1, n + 1))
            A[:n, :n] = S
            A[:n, n] = e
            A[n, :n] = e
        else:
            e, A = None, S
        return cls(S=S, l=l, mean_weight=e, lu=sla.lu_factor(A))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.l == 0:
            pad = np.zeros((1,) + b.shape[1:])
            return sla.lu_solve(self.lu, np.concatenate([b, pad]))[:-1]
        return sla.lu_solve(self.lu, b)


def assemble_Nl(eq: Equilibrium, grid: RadialGrid, l: int) -> DiscreteForm:
    """Full N_l as the symmetric pencil (Q, G^T S^-1 G) on g-dofs.

    K = Y-mass + sym(B) realises the energy form Q; the mass is the dual
    norm of g through the potential solve. For l = 0 the constraint
    int g r^2 dr = 0 is attached. ``aux`` holds the pieces needed to map
    eigenvectors to displacement fields.
    """
    _require_finite_y_norm(eq)
    dofs = _y_dofs(grid)
    MY = weighted_mass(grid, Y_SPACE, eq)
    B_raw = nonlocal_block(eq, grid, l)
    B, asym = symmetrize(B_raw)
    Q = (MY + B)[np.ix_(dofs, dofs)]
    G = weighted_mass(grid, PLAIN_R2)
    Gg = G[:, dofs]
    pot = PotentialSolver.build(eq, grid, l)
    X = pot.solve(Gg)
    Mdual, _ = symmetrize(Gg.T @ X)
    form = DiscreteForm(K=Q, M=Mdual, grid=grid, inner_product="Y_space",
                        dofs=dofs, asymmetry=asym,
                        meta={"operator": "Nl", "l": l, "gamma": eq.gamma,
                              "formulation": "energy_pencil"},
                        aux={"G": G, "potential": pot, "Y_mass": MY,
                             "B": B})
    if l == 0:
        form = apply_zero_mean_constraint(form, PLAIN_R2, eq)
    return form


def assemble_A(eq: Equilibrium, grid: RadialGrid, full: bool = False):
    """-(1/r^2)(r^2 y')' + 2y/r^2 - 4 pi G (drho/du) y with y(R) = 0."""
    pts, _ = grid.quadrature()
    d = _profile_derivatives(eq, pts)
    drho_du = d["rho"] / d["c2"]
    K = stiffness_from_values(grid, pts**2)
    K += mass_from_values(grid, 2.0 - eq.four_pi_G * drho_du * pts**2)
    M = mass_from_values(grid, pts**2)
    if full:
        return K, M
    dofs = np.arange(grid.N)
    return DiscreteForm(K=K[np.ix_(dofs, dofs)], M=M[np.ix_(dofs, dofs)],
                        grid=grid, inner_product="X_0", dofs=dofs,
                        meta={"operator": "A", "l": 1, "gamma": eq.gamma,
                              "max_drho_du": float(np.max(drho_du))})


def translational_residual(eq: Equilibrium, grid: RadialGrid) -> float:
    """||A u'|| / ||u'|| in the discrete X_0 norm; test functions vanish at R."""
    K, M = assemble_A(eq, grid, full=True)
    du = eq.profile(grid.nodes)["du_dr"]
    dofs = np.arange(grid.N)
    res = (K @ du)[dofs]
    Mi = M[np.ix_(dofs, dofs)]
    rep = sla.solve(Mi, res, assume_a="pos")
    return math.sqrt(rep @ Mi @ rep) / math.sqrt(du @ M @ du)


# ---------------------------------------------------------------- H_l et al.

def hl_apply(eq: Equilibrium, grid: RadialGrid, l: int, g: RadialField) -> dict:
    """H_l g and dH_l g / dr at the nodes (and Gauss points) for P1 g."""
    H, dH = green_at_nodes(grid, l, g.values)
    Hq, dHq = green_at_gauss(grid, l, g.values)
    return {"H": RadialField(grid, H, Hq), "dH": RadialField(grid, dH, dHq),
            "H_at_R": float(H[-1])}


def hl_exterior(H_at_R: float, R: float, l: int, r):
    """Continuation H(R) (R/r)^{l+1} outside the star."""
    return H_at_R * (R / np.asarray(r, dtype=float)) ** (l + 1)


def hl_ode_residual(eq, grid: RadialGrid, l: int, g: RadialField) -> float:
    """Weak residual of -(1/r^2)(r^2 H')' + l(l+1)H/r^2 = g, relative.

    Tested against all hats; the boundary term at R is the exterior
    matching condition H'(R) = -(l+1) H(R)/R.
    """
    out = hl_apply(eq, grid, l, g)
    pts, wts = grid.quadrature()
    left, right = grid.hats()
    Hq, dHq, gq = out["H"].quad, out["dH"].quad, g.at_gauss()
    h = grid.widths[:, None]
    dl, dr = -1.0 / h, 1.0 / h
    a = wts * pts**2 * dHq
    b = wts * l * (l + 1) * Hq
    f = wts * pts**2 * gq
    res = np.zeros(grid.N + 1)
    res[:-1] += np.sum(a * dl + b * left - f * left, axis=1)
    res[1:] += np.sum(a * dr + b * right - f * right, axis=1)
    res[-1] += (l + 1) * out["H_at_R"] * grid.R
    scale = np.sum(np.abs(f))
    return float(np.max(np.abs(res)) / scale)


def solve_potential_l(eq: Equilibrium, grid: RadialGrid, l: int,
                      f: RadialField, tol: float = 1e-10) -> RadialField:
    """Weak solution of div(rho grad U) = f for degree l.

    int rho U'V' r^2 + l(l+1) int rho U V = -int f V r^2 for all V; for l = 0
    the constant is fixed by int U rho drho/dP r^2 = 0.
    """
    pts, _ = grid.quadrature()
    b = -load_vector(grid, f.at_gauss() * pts**2)
    if l == 0:
        total = float(np.sum(b))
        scale = float(np.sum(np.abs(b))) or 1.0
        if abs(total) > tol * scale:
            raise IncompatibleSource(
                f"degree-0 source has int f r^2 dr = {-total:.3e}")
        b = b - total * load_vector(grid, pts**2) / np.sum(
            load_vector(grid, pts**2))
    solver = PotentialSolver.build(eq, grid, l)
    U = solver.solve(b)
    return RadialField(grid, U)


def poincare_constant(eq: Equilibrium, grid: RadialGrid) -> float:
    """Smallest nonzero eigenvalue of the rho-stiffness against the
    rho drho/dP mass on zero-mean functions."""
    from .eigensolver import solve_gsep
    S = potential_stiffness(eq, grid, 0)
    E = weighted_mass(grid, E_SPACE, eq)
    form = DiscreteForm(K=S, M=E, grid=grid, inner_product="E_space",
                        dofs=np.arange(grid.N + 1))
    form = apply_zero_mean_constraint(form, E_SPACE, eq)
    return float(solve_gsep(form, 1).lambdas[0])


def divergence_lm(eq: Equilibrium, l: int, psi: RadialField,
                  chi: RadialField) -> RadialField:
    """Weak div(rho xi): int g phi r^2 = -int r^3 rho psi phi' - l(l+1) int rho chi phi r^2.

    Solved with the r^2 Gram matrix over all nodes; kappa_t does not enter.
    """
    grid = psi.grid
    pts, wts = grid.quadrature()
    rho = eq.profile(pts)["rho"]
    left, right = grid.hats()
    h = grid.widths[:, None]
    flux = wts * pts**3 * rho * psi.at_gauss()
    rhs = np.zeros(grid.N + 1)
    rhs[:-1] += np.sum(flux, axis=1) / h[:, 0]
    rhs[1:] -= np.sum(flux, axis=1) / h[:, 0]
    if l:
        rhs -= l * (l + 1) * load_vector(grid, rho * chi.at_gauss() * pts**2)
    G = weighted_mass(grid, PLAIN_R2)
    return RadialField(grid, sla.solve(G, rhs, assume_a="pos"))


def gradient_mode(grid: RadialGrid, l: int, potential, m: int = 0
                  ) -> VectorModeLM:
    """(psi, chi) = (G'/r, G/r^2) of a P1 potential G, exact at Gauss points."""
    pts, _ = grid.quadrature()
    Gq = grid.interpolate(potential)
    dGq = np.repeat(grid.slopes(potential)[:, None], pts.shape[1], axis=1)
    psi_q = dGq / pts
    chi_q = Gq / pts**2
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(grid.nodes > 0, grid.nodes, np.nan)
        s = np.concatenate([grid.slopes(potential), grid.slopes(potential)[-1:]])
        psi_n = np.nan_to_num(s / r)
        chi_n = np.nan_to_num(np.asarray(potential) / r**2)
    zero = RadialField.zeros(grid)
    chi = RadialField(grid, chi_n, chi_q) if l else zero
    return VectorModeLM(l, m, RadialField(grid, psi_n, psi_q), chi, zero)


def Mhat_apply(eq: Equilibrium, grid: RadialGrid, l: int, g: RadialField):
    """(M1, M2) = ((1/r) dG/dr, sqrt(l(l+1)) G / r^2) evaluated pointwise.

    G = -(c^2/rho) g + 4 pi G_const H_l g with g taken as its P1 interpolant.
    """
    pts, _ = grid.quadrature()
    d = _profile_derivatives(eq, pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(d["rho"] > 0, d["c2"] / d["rho"], 0.0)
        ds = np.where(d["rho"] > 0, (eq.gamma - 1) * d["du"] / d["rho"]
                      * (1.0 - eq.nu), 0.0)
    gq = g.at_gauss()
    dgq = np.repeat(grid.slopes(g.values)[:, None], pts.shape[1], axis=1)
    Hq, dHq = green_at_gauss(grid, l, g.values)
    Gq = -s * gq + eq.four_pi_G * Hq
    dGq = -(ds * gq + s * dgq) + eq.four_pi_G * dHq
    M1 = RadialField(grid, _project_nodal(grid, dGq / pts), dGq / pts)
    if l == 0:
        M2 = RadialField.zeros(grid)
    else:
        c = math.sqrt(l * (l + 1))
        M2 = RadialField(grid, _project_nodal(grid, c * Gq / pts**2),
                         c * Gq / pts**2)
    return M1, M2


def _project_nodal(grid: RadialGrid, fq):
    """L2(r^2) projection of Gauss-point data onto P1 (for display only)."""
    pts, _ = grid.quadrature()
    G = weighted_mass(grid, PLAIN_R2)
    return sla.solve(G, load_vector(grid, fq * pts**2), assume_a="pos")


def quadratic_form_Lambda(eq: Equilibrium, grid: RadialGrid, l: int,
                          g: RadialField) -> dict:
    """Lambda_l = int (c^2/rho) g^2 r^2 - 4 pi G int_0^inf (r^2 Psi'^2 + l(l+1) Psi^2)
    with Psi = -H_l g and the exterior tail (l+1) Psi(R)^2 R."""
    pts, wts = grid.quadrature()
    gq = g.at_gauss()
    acoustic = float(np.sum(wts * Y_SPACE(eq, pts) * gq**2))
    out = hl_apply(eq, grid, l, g)
    Hq, dHq = out["H"].quad, out["dH"].quad
    interior = float(np.sum(wts * (pts**2 * dHq**2 + l * (l + 1) * Hq**2)))
    tail = (l + 1) * out["H_at_R"] ** 2 * grid.R
    gravity = eq.four_pi_G * (interior + tail)
    return {"Lambda": acoustic - gravity, "acoustic": acoustic,
            "gravity": gravity, "tail": tail,
            "scale": acoustic + gravity}


def gravity_tail_numeric(H_at_R: float, R: float, l: int,
                         r_max_factor: float = 100.0) -> float:
    """int_R^{r_max} (r^2 H'^2 + l(l+1) H^2) dr for the exterior power law."""
    from scipy.integrate import quad
    def f(r):
        H = hl_exterior(H_at_R, R, l, r)
        dH = -(l + 1) * H / r
        return r**2 * dH**2 + l * (l + 1) * H**2
    val, _ = quad(f, R, r_max_factor * R, epsabs=0, epsrel=1e-12, limit=200)
    return val


def form_I_bound_check(eq: Equilibrium, l: int, psi: RadialField,
                       chi: RadialField) -> dict:
    """I = int H_l(g) g r^2 with g = div(rho xi) against rho_O ||(psi, sqrt(l(l+1)) chi)||^2."""
    grid = psi.grid
    g = divergence_lm(eq, l, psi, chi)
    pts, wts = grid.quadrature()
    Hq, _ = green_at_gauss(grid, l, g.values)
    I = float(np.sum(wts * Hq * g.at_gauss() * pts**2))
    zero = RadialField.zeros(grid)
    U = VectorModeLM(l, 0, psi, chi if l else zero, zero)
    bound = eq.law.rho_center * U.norm(eq) ** 2
    return {"I": I, "bound": bound, "pass": I <= bound * (1 + 1e-10)}


# ---------------------------------------------------------------- Liouville

def liouville_transform(eq: Equilibrium, l: int, n: int = 2000
                        ) -> LiouvilleData:
    """x(r) = int_0^r sqrt(drho/dP) dr and the normal-form potential q_hat.

    The last cell uses Gauss-Jacobi quadrature for the (R - r)^{-1/2}
    endpoint behaviour after checking u ~ K (R - r) there.
    """
    if l < 1:
        raise ValueError("need l >= 1")
    R, g = eq.R, eq.gamma
    grid_r = R * (1.0 - (1.0 - np.arange(n + 1) / n) ** 2)
    s_last = R - grid_r[-2]
    s_probe = np.array([0.25, 0.5, 1.0]) * s_last
    u_probe = eq.profile(R - s_probe)["u"]
    ratio = u_probe / (eq.K * s_probe)
    if not np.all(np.isfinite(ratio)) or np.max(np.abs(ratio - 1)) > 0.05:
        raise EndpointModelError(
            f"u/(K (R-r)) = {ratio} on the last cell, expected ~1")
    inv_c = lambda r: 1.0 / np.sqrt((g - 1) * eq.profile(r)["u"])
    x, w = np.polynomial.legendre.leggauss(8)
    a, b = grid_r[:-2, None], grid_r[1:-1, None]
    pts = 0.5 * (b - a) * x + 0.5 * (a + b)
    incr = np.sum(0.5 * (b - a) * w * inv_c(pts), axis=1)
    # last cell: int_0^h s^{-1/2} f(s) ds with f = sqrt(s) / c smooth
    tj, wj = roots_jacobi(8, -0.5, 0.0)
    s = 0.5 * s_last * (tj + 1.0)
    f = np.sqrt(s) * inv_c(R - s)
    last = float(np.sum(wj * f) * math.sqrt(0.5 * s_last))
    xr = np.concatenate([[0.0], np.cumsum(incr), [0.0]])
    xr[-1] = xr[-2] + last
    r_in = grid_r[1:-1]
    return LiouvilleData(l=l, r=grid_r, x_of_r=xr, x_plus=float(xr[-1]),
                         q_hat=np.concatenate([[np.inf], q_hat(eq, l, r_in),
                                               [np.nan]]),
                         kappa_const=kappa_forms(g)[0],
                         endpoint_class=endpoint_class(g))


def q_hat(eq: Equilibrium, l: int, r):
    """Normal-form potential q_l + m_xx / m with m = (c^6 r^4 / rho^2)^{1/4}.

    In r: q_l + (c^2/4) (A' + A^2/4 + A (c^2)'/(2 c^2)),
    A = 4/r + 3 (c^2)'/c^2 - 2 rho'/rho.
    """
    r = np.asarray(r, dtype=float)
    d = _profile_derivatives(eq, r)
    lu = d["du"] / d["u"]
    dlu = d["d2u"] / d["u"] - lu**2
    A = 4.0 / r + (3.0 - 2.0 * eq.nu) * lu
    dA = -4.0 / r**2 + (3.0 - 2.0 * eq.nu) * dlu
    D = 0.5 * lu
    return q_l_polytrope(eq, l, r) + 0.25 * d["c2"] * (dA + 0.25 * A**2 + A * D)
