"""Polytropic equilibria from the Lane-Emden equation.

The dimensionless profile Theta(xi) solves

    (1/xi^2) d/dxi (xi^2 dTheta/dxi) = -Theta^nu,   Theta(0) = 1, Theta'(0) = 0,

and maps to a physical star of central density rho_O through
u = u_O Theta, rho = rho_O Theta^nu, r = alpha xi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline


class NoFiniteRadius(ValueError):
    """Polytropic index too large for a star of finite radius."""


class ZeroNotFound(RuntimeError):
    """Lane-Emden integration left its search interval without a zero."""


class OutOfDomain(ValueError):
    """Radius outside the star."""


XI_SERIES = 1.0e-3


@dataclass(frozen=True)
class GasLaw:
    """Exact polytrope P = A rho^gamma with central density rho_center."""

    gamma: float
    A: float = 1.0
    G_const: float = 1.0
    rho_center: float = 1.0

    def __post_init__(self):
        if not (1.2 < self.gamma < 2.0):
            raise ValueError(
                f"gamma={self.gamma} outside the admissible interval (6/5, 2)")
        if self.A <= 0 or self.G_const <= 0 or self.rho_center <= 0:
            raise ValueError("A, G_const and rho_center must be positive")

    def nu(self) -> float:
        return 1.0 / (self.gamma - 1.0)

    @property
    def u_center(self) -> float:
        g = self.gamma
        return self.A * g / (g - 1.0) * self.rho_center ** (g - 1.0)


@dataclass(frozen=True)
class LaneEmdenSolution:
    nu: float
    xi_grid: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    xi1: float
    dtheta_at_xi1: float
    step: float = 0.0


def _rhs(xi, y, nu):
    th, dth = y
    return np.array([dth, -max(th, 0.0) ** nu - 2.0 * dth / xi])


def _rk4_step(xi, y, h, nu):
    k1 = _rhs(xi, y, nu)
    k2 = _rhs(xi + 0.5 * h, y + 0.5 * h * k1, nu)
    k3 = _rhs(xi + 0.5 * h, y + 0.5 * h * k2, nu)
    k4 = _rhs(xi + h, y + h * k3, nu)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _series(xi, nu):
    th = 1.0 - xi**2 / 6.0 + nu * xi**4 / 120.0
    dth = -xi / 3.0 + nu * xi**3 / 30.0
    return np.array([th, dth])


def _march_to_zero(xi, y, step, nu, xi_stop, xs, ths, dths):
    """Fixed-step RK4 until the next step would cross Theta = 0."""
    while True:
        y_new = _rk4_step(xi, y, step, nu)
        if y_new[0] <= 0.0:
            return xi, y
        xi += step
        y = y_new
        xs.append(xi)
        ths.append(y[0])
        dths.append(y[1])
        if xi > xi_stop:
            raise ZeroNotFound(f"no zero of Theta below xi={xi_stop}")


def solve_lane_emden(nu: float, tol: float = 1e-12, step: float = 1e-3,
                     xi_max_guess: float | None = None,
                     surface_refine: int = 64) -> LaneEmdenSolution:
    """Integrate Lane-Emden with fixed-step RK4 from a series start.

    The first zero is located by bisecting the length of the final step
    until the bracket is below ``tol``. Theta^nu is not smooth at the zero,
    so the last few steps are redone with step / ``surface_refine`` to keep
    interpolated profiles accurate near the surface.
    """
    if nu >= 5.0:
        raise NoFiniteRadius(f"nu={nu} >= 5 has no finite first zero")
    if nu <= 0.0 or tol <= 0.0:
        raise ValueError("need nu > 0 and tol > 0")
    if xi_max_guess is None:
        # loose upper envelope of the first zero, diverging as nu -> 5
        xi_max_guess = 3.0 + 15.0 / (5.0 - nu)
    xi_stop = 1.2 * xi_max_guess
    xi = XI_SERIES
    y = _series(xi, nu)
    xs, ths, dths = [0.0, xi], [1.0, y[0]], [0.0, y[1]]
    xi, y = _march_to_zero(xi, y, step, nu, xi_stop, xs, ths, dths)
    fine = step
    if surface_refine > 1:
        n_back = min(16, max(1, int(0.05 * xi / step)), len(xs) - 2)
        del xs[-n_back:], ths[-n_back:], dths[-n_back:]
        xi, y = xs[-1], np.array([ths[-1], dths[-1]])
        fine = step / surface_refine
        xi, y = _march_to_zero(xi, y, fine, nu, xi_stop, xs, ths, dths)
    lo, hi = 0.0, fine
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _rk4_step(xi, y, mid, nu)[0] > 0.0:
            lo = mid
        else:
            hi = mid
    h_last = 0.5 * (lo + hi)
    y1 = _rk4_step(xi, y, h_last, nu)
    xi1 = xi + h_last
    if h_last > 1e-3 * fine:
        xs.append(xi1)
        ths.append(0.0)
        dths.append(y1[1])
    else:
        # the zero sits on top of the last sample: replace it
        xs[-1], ths[-1], dths[-1] = xi1, 0.0, y1[1]
    return LaneEmdenSolution(nu=nu, xi_grid=np.array(xs), theta=np.array(ths),
                             dtheta=np.array(dths), xi1=xi1,
                             dtheta_at_xi1=float(y1[1]), step=step)


def structural_constant(sol: LaneEmdenSolution) -> dict:
    """C(nu) = -xi1 Theta'(xi1) with two integral cross-checks.

    ``integral_xi`` is -1 + int Theta^nu xi dxi, ``integral_xi2`` is the
    same with weight xi^2. Integration by parts shows the first equals
    the boundary form; the second generally does not.
    """
    nu = sol.nu
    boundary = -sol.xi1 * sol.dtheta_at_xi1
    spline = _theta_spline(sol)
    xg, wg = np.polynomial.legendre.leggauss(8)
    edges = sol.xi_grid
    a, b = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (b - a) * xg + 0.5 * (a + b)
    w = 0.5 * (b - a) * wg
    th_nu = np.clip(spline(pts), 0.0, None) ** nu
    int_xi = -1.0 + float(np.sum(w * th_nu * pts))
    int_xi2 = -1.0 + float(np.sum(w * th_nu * pts**2))
    values = {"boundary": boundary, "integral_xi": int_xi,
              "integral_xi2": int_xi2}
    diffs = {
        "boundary-integral_xi": boundary - int_xi,
        "boundary-integral_xi2": boundary - int_xi2,
        "integral_xi-integral_xi2": int_xi - int_xi2,
    }
    agreeing = min(diffs, key=lambda k: abs(diffs[k]))
    return {"C": boundary, "values": values, "differences": diffs,
            "agreeing_pair": agreeing}


def _theta_spline(sol: LaneEmdenSolution) -> CubicHermiteSpline:
    return CubicHermiteSpline(sol.xi_grid, sol.theta, sol.dtheta)


def _d2theta(xi, th, dth, nu):
    out = np.empty_like(xi)
    inner = xi > 0
    out[inner] = -np.clip(th[inner], 0, None) ** nu - 2 * dth[inner] / xi[inner]
    out[~inner] = -1.0 / 3.0
    return out


@dataclass(frozen=True)
class Equilibrium:
    law: GasLaw
    lane_emden: LaneEmdenSolution
    R: float
    alpha: float
    K: float
    r_samples: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    P: np.ndarray
    dPdrho: np.ndarray
    du_dr: np.ndarray
    drho_dr: np.ndarray
    _theta: CubicHermiteSpline = field(repr=False, compare=False)
    _dtheta: CubicHermiteSpline = field(repr=False, compare=False)

    @property
    def gamma(self) -> float:
        return self.law.gamma

    @property
    def nu(self) -> float:
        return self.law.nu()

    @property
    def u_center(self) -> float:
        return self.law.u_center

    @property
    def four_pi_G(self) -> float:
        return 4.0 * math.pi * self.law.G_const

    def profile(self, r) -> dict:
        """Vectorised profile without domain checks (r clipped to [0, R])."""
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.R)
        xi = r / self.alpha
        th = np.where(r < self.R, np.clip(self._theta(xi), 0.0, None), 0.0)
        dth = self._dtheta(xi)
        d2th = _d2theta(xi, th, dth, self.nu)
        uO, a, g, nu = self.u_center, self.alpha, self.gamma, self.nu
        u = uO * th
        rho = self.law.rho_center * th**nu
        with np.errstate(divide="ignore", invalid="ignore"):
            drho = np.where(th > 0, nu * self.law.rho_center
                            * th ** (nu - 1.0) * dth / a, 0.0)
        return {
            "r": r, "rho": rho, "u": u, "P": self.law.A * rho**g,
            "dPdrho": (g - 1.0) * u, "du_dr": uO * dth / a,
            "d2u_dr2": uO * d2th / a**2, "drho_dr": drho,
        }

    def eval_profile(self, r) -> dict:
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0.0) or np.any(r_arr > self.R * (1 + 1e-14)):
            raise OutOfDomain(f"radius outside [0, R={self.R}]")
        return self.profile(r_arr)

    def to_json(self) -> dict:
        return {
            "gamma": self.law.gamma, "A": self.law.A, "G": self.law.G_const,
            "rho_center": self.law.rho_center, "xi1": self.lane_emden.xi1,
            "R": self.R, "alpha": self.alpha, "K": self.K,
            "samples": [
                {"r": float(r), "rho": float(d), "u": float(u), "P": float(p)}
                for r, d, u, p in zip(self.r_samples, self.rho, self.u, self.P)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def read_equilibrium_json(text: str) -> dict:
    """Parse a document written by ``Equilibrium.dumps`` into arrays."""
    doc = json.loads(text)
    out = {k: doc[k] for k in ("gamma", "A", "G", "rho_center", "xi1", "R",
                               "alpha", "K")}
    for name in ("r", "rho", "u", "P"):
        out[name] = np.array([s[name] for s in doc["samples"]])
    return out


def build_equilibrium(law: GasLaw, n_samples: int = 401,
                      step: float = 1e-3) -> Equilibrium:
    sol = solve_lane_emden(law.nu(), step=step)
    uO = law.u_center
    alpha = math.sqrt(uO / (4.0 * math.pi * law.G_const * law.rho_center))
    R = alpha * sol.xi1
    K = uO / alpha * abs(sol.dtheta_at_xi1)
    xi = sol.xi_grid
    d2 = _d2theta(xi, sol.theta, sol.dtheta, sol.nu)
    theta = CubicHermiteSpline(xi, sol.theta, sol.dtheta)
    dtheta = CubicHermiteSpline(xi, sol.dtheta, d2)
    r = np.linspace(0.0, R, n_samples)
    eq = Equilibrium(law=law, lane_emden=sol, R=R, alpha=alpha, K=K,
                     r_samples=r, rho=np.empty(0), u=np.empty(0),
                     P=np.empty(0), dPdrho=np.empty(0), du_dr=np.empty(0),
                     drho_dr=np.empty(0), _theta=theta, _dtheta=dtheta)
    prof = eq.profile(r)
    for name in ("rho", "u", "P", "dPdrho", "du_dr", "drho_dr"):
        object.__setattr__(eq, name, prof[name])
    return eq


def hydrostatic_residual(sol: LaneEmdenSolution, lo: float = 0.1,
                         hi: float = 0.9) -> float:
    """Max |(1/xi^2)(xi^2 Theta')' + Theta^nu| by central differences of
    the stored samples on the uniform part of the grid."""
    xi, th = sol.xi_grid[1:-1], sol.theta[1:-1]
    h = sol.step
    keep = (xi[1:-1] > lo * sol.xi1) & (xi[1:-1] < hi * sol.xi1)
    x = xi[1:-1]
    d1 = (th[2:] - th[:-2]) / (2 * h)
    d2 = (th[2:] - 2 * th[1:-1] + th[:-2]) / h**2
    res = d2 + 2 * d1 / x + np.clip(th[1:-1], 0, None) ** sol.nu
    return float(np.max(np.abs(res[keep])))
