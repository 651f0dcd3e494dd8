"""Resolvent and closed-form mode evolution for one spherical-harmonic degree.

Everything here is evaluated from exact formulas on top of the discrete
N_l pencil; nothing is time-stepped. The gradient field attached to a
density perturbation g is the discrete potential G_h solving

    S_l G_h = G_r2 d - lambda G_r2 g,

where S_l is the weighted potential stiffness and G_r2 the r^2 Gram matrix.
Its weak divergence reproduces the right-hand side exactly, which keeps
div(rho xi) consistent to round-off.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretization import DiscreteForm
from .eigensolver import constraint_basis, solve_gsep
from .equilibrium import Equilibrium
from .operators import (RadialField, VectorModeLM, Mhat_apply, divergence_lm,
                        gradient_mode)


class NearSpectrum(ValueError):
    """Resolvent requested too close to a computed eigenvalue."""


class IncompatibleInitialData(ValueError):
    """Initial velocity does not match the eigenmode's divergence."""


class NotUnstable(ValueError):
    """Exponential branch requested for a non-negative eigenvalue."""


def _check_pencil(form: DiscreteForm):
    if form.meta.get("formulation") != "energy_pencil":
        raise ValueError("dynamics needs the full N_l pencil (assemble_Nl)")


def discrete_potential(form: DiscreteForm, g_dofs, lam: float,
                       d_nodal=None) -> np.ndarray:
    """Nodal G_h with S_l G_h = G d - lambda G g (d = 0 when omitted)."""
    G = form.aux["G"]
    g_full = form.full_vector(g_dofs)
    rhs = -lam * (G @ g_full)
    if d_nodal is not None:
        rhs = rhs + G @ d_nodal
    return form.aux["potential"].solve(rhs)


def mode_gradient(form: DiscreteForm, lam: float, phi) -> VectorModeLM:
    """M_hat(phi) for an eigenpair, i.e. the gradient of the discrete
    potential -lambda S^-1 G phi; div(rho M_hat phi) = lambda phi exactly."""
    _check_pencil(form)
    pot = discrete_potential(form, phi, lam)
    return gradient_mode(form.grid, form.meta["l"], pot)


def resolvent_apply(eq: Equilibrium, form: DiscreteForm, lam: float,
                    f: VectorModeLM, modes=None, return_details=False):
    """xi = (1/lambda)(f + M_hat g) with g = (lambda - N_l)^{-1} div(rho f).

    ``modes`` (a ModeSet of ``form``) is computed when absent and is used for
    the NearSpectrum test |lambda - mu_k| <= 10 residual scale.
    """
    _check_pencil(form)
    if lam == 0:
        raise NearSpectrum("lambda = 0 lies in the spectrum of L")
    if modes is None:
        modes = solve_gsep(form)
    scale = float(np.max(np.abs(modes.lambdas)))
    near = np.abs(modes.lambdas - lam) <= 10 * np.maximum(
        modes.residuals, np.finfo(float).eps) * scale
    if np.any(near):
        raise NearSpectrum(f"lambda={lam} within tolerance of eigenvalue "
                           f"{modes.lambdas[near][0]}")
    grid, l = form.grid, form.meta["l"]
    d = divergence_lm(eq, l, f.psi, f.chi)
    G, pot = form.aux["G"], form.aux["potential"]
    Gg = G[:, form.dofs]
    rhs = Gg.T @ pot.solve(G @ d.values)
    A = lam * form.M - form.K
    Z = constraint_basis(len(form.dofs), form.constraint)
    g = Z @ sla.solve(Z.T @ A @ Z, Z.T @ rhs)
    Gh = discrete_potential(form, g, lam, d.values)
    grad = gradient_mode(grid, l, Gh, f.m)
    xi = (1.0 / lam) * (f + grad)
    if not return_details:
        return xi
    return xi, {"g": g, "G_h": Gh, "div_f": d}


def resolvent_residual(eq: Equilibrium, form: DiscreteForm, lam: float,
                       f: VectorModeLM, xi: VectorModeLM) -> float:
    """Substitution check of lambda xi - L xi = f in weak form.

    g is recomputed from xi; lambda xi - f must be the gradient of a
    potential G_h whose moments against the density test functions equal
    -Q g. Returns the relative mismatch of those moments.
    """
    l = form.meta["l"]
    g = divergence_lm(eq, l, xi.psi, xi.chi).values[form.dofs]
    d = divergence_lm(eq, l, f.psi, f.chi)
    Gh = discrete_potential(form, g, lam, d.values)
    grad = gradient_mode(form.grid, l, Gh, f.m)
    mismatch = lam * xi + (-1.0) * (f + grad)
    # for l = 0 the potential is fixed only up to a constant, which shifts
    # the moments along the constraint vector
    Z = constraint_basis(len(form.dofs), form.constraint)
    moments = Z.T @ (form.aux["G"][:, form.dofs].T @ Gh)
    Qg = Z.T @ (form.K @ g)
    rel = np.linalg.norm(moments + Qg) / max(
        np.linalg.norm(Qg) + np.linalg.norm(moments), 1e-300)
    return max(float(rel), mismatch.norm(eq) / max(f.norm(eq), 1e-300))


@dataclass(frozen=True)
class ModeTrajectory:
    times: np.ndarray
    snapshots: list
    B_field: VectorModeLM
    periodic_flag: bool
    norms: np.ndarray = field(repr=False)
    component_norms: dict = field(repr=False, default_factory=dict)

    def to_csv(self, out=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "norm", "psi", "chi", "kappa_t"])
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t)), repr(float(self.norms[i]))]
                       + [repr(float(self.component_norms[k][i]))
                          for k in ("psi", "chi", "kappa_t")])
        text = buf.getvalue()
        if out is not None:
            with open(out, "w") as fh:
                fh.write(text)
        return text


def _trajectory(eq, times, B, shape_fn, base: VectorModeLM, tol):
    times = np.asarray(times, dtype=float)
    snaps, norms = [], []
    comps = {"psi": [], "chi": [], "kappa_t": []}
    for t in times:
        xi = t * B + shape_fn(t) * base
        snaps.append(xi)
        c = xi.component_norms(eq)
        for k in comps:
            comps[k].append(c[k])
        norms.append(math.sqrt(sum(v**2 for v in c.values())))
    scale = max(base.norm(eq), 1e-300)
    periodic = B.norm(eq) <= tol * scale
    return ModeTrajectory(times=times, snapshots=snaps, B_field=B,
                          periodic_flag=bool(periodic),
                          norms=np.array(norms),
                          component_norms={k: np.array(v)
                                           for k, v in comps.items()})


def evolve_mode(eq: Equilibrium, form: DiscreteForm, lam: float, phi,
                E: float, v0: VectorModeLM, times, tol: float = 1e-8
                ) -> ModeTrajectory:
    """xi(t) = B t + (E/lambda) sin(sqrt(lambda) t) M_hat(phi) with
    B = v0 - (E/sqrt(lambda)) M_hat(phi).

    The initial velocity must satisfy div(rho v0) = E sqrt(lambda) phi.
    """
    if lam <= 0:
        raise ValueError("evolve_mode needs a positive eigenvalue")
    l = form.meta["l"]
    Mphi = mode_gradient(form, lam, phi)
    root = math.sqrt(lam)
    div_v0 = divergence_lm(eq, l, v0.psi, v0.chi).values
    target = form.full_vector(E * root * np.asarray(phi))
    scale = max(np.max(np.abs(target)), np.max(np.abs(div_v0)), 1e-300)
    if np.max(np.abs(div_v0 - target)) > 1e-7 * scale and scale > 1e-300:
        raise IncompatibleInitialData(
            "div(rho v0) differs from E sqrt(lambda) phi")
    B = v0 + (-E / root) * Mphi
    return _trajectory(eq, times, B, lambda t: E / lam * math.sin(root * t),
                       Mphi, tol)


def compatible_velocity(form: DiscreteForm, lam: float, phi, E: float
                        ) -> VectorModeLM:
    """The initial velocity (E/sqrt(lambda)) M_hat(phi) with B = 0."""
    return (E / math.sqrt(lam)) * mode_gradient(form, lam, phi)


def toroidal_field(grid, l: int, profile, m: int = 0) -> VectorModeLM:
    """Purely toroidal mode r kappa_t (e_r x grad_S Y) with kappa_t = profile."""
    if l < 1:
        raise ValueError("toroidal fields need l >= 1")
    z = RadialField.zeros(grid)
    kt = profile if isinstance(profile, RadialField) else RadialField(
        grid, np.asarray(profile, dtype=float))
    return VectorModeLM(l, m, z, z, kt)


def negative_mode_growth(eq: Equilibrium, lam: float, psi: RadialField,
                         E: float, times, B: VectorModeLM | None = None
                         ) -> ModeTrajectory:
    """xi(t) = B t - (E/lambda) e^{-lambda t} M_hat(phi) for a radial mode.

    phi is the density perturbation div(rho r psi e_r) of the unstable
    radial displacement ``psi``; the exponent is taken as written, so the
    norm grows like e^{|lambda| t}. A spherically symmetric B must vanish.
    """
    if lam >= 0:
        raise NotUnstable(f"lambda={lam} is not negative")
    grid = psi.grid
    zero = RadialField.zeros(grid)
    g = divergence_lm(eq, 0, psi, zero)
    M1, _ = Mhat_apply(eq, grid, 0, g)
    Mphi = VectorModeLM(0, 0, M1, zero, zero)
    if B is None:
        B = VectorModeLM.zeros(grid, 0)
    return _trajectory(eq, times, B, lambda t: -E / lam * math.exp(-lam * t),
                       Mphi, 1e-12)


def growth_rate(traj: ModeTrajectory) -> float:
    """Least-squares slope of log ||xi(t)||."""
    mask = traj.norms > 0
    return float(np.polyfit(traj.times[mask], np.log(traj.norms[mask]), 1)[0])


def late_slope(traj: ModeTrajectory, frac: float = 0.5) -> tuple[float, float]:
    """Linear fit of ||xi(t)|| over the last ``frac`` of the samples;
    returns (slope, R^2)."""
    n = len(traj.times)
    t = traj.times[int((1 - frac) * n):]
    y = traj.norms[int((1 - frac) * n):]
    coef = np.polyfit(t, y, 1)
    fit = np.polyval(coef, t)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fit) ** 2) / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2)
