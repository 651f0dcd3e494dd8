import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad

from polystab import operators as op
from polystab.discretization import make_grid
from polystab.eigensolver import solve_gsep

# shooting-oracle eigenvalues (independent ODE route), frozen
LSS_53 = [1.891986414388914, 8.765077068163947, 18.586530980320553,
          31.39946406748232]
LSS_13 = [-0.09229286035391548, 0.3437857360449183, 0.6914017304310968]
NL00_53_L1 = [-0.64370759281931, 4.4100391825912535, 12.47699893939195,
              23.681657660408966, 37.89786760164207]
A_53 = [2.640255342631025, 17.382462115307675, 39.6247052065237,
        69.33015126771362, 106.47962608974314]


def test_kappa_values():
    assert op.kappa_forms(4.0 / 3.0)[0] == pytest.approx(3.75)
    assert op.kappa_forms(1.5)[0] == pytest.approx(0.75)
    assert op.kappa_forms(5.0 / 3.0)[0] == 0.0
    assert op.endpoint_class(1.4) == "LimitPoint"
    assert op.endpoint_class(1.6) == "LimitCircle"


def test_frobenius_roots():
    assert op.frobenius_roots(1) == (2, -1)
    assert op.frobenius_roots(3) == (4, -3)
    with pytest.raises(ValueError):
        op.frobenius_roots(0)


def test_structural_coefficient():
    assert op.structural_coefficient(4.0 / 3.0) == pytest.approx(0.0)
    assert op.structural_coefficient(1.5, rho=2.0, dGamma_drho=0.5) == \
        pytest.approx(3 * 2.0 / 1.5 * 0.5 + 0.5)


def test_q_l_identity(eq53):
    r = np.linspace(0, eq53.R, 101)
    out = op.q_l_coefficient(eq53, 2, r)
    assert out["max_rel_error"] < 1e-9
    assert out["blowup_at_center"] and np.isinf(out["q"][0])
    assert out["q"][-1] == 0.0
    inner = r[1:-1]
    assert np.allclose(out["q"][1:-1], op.q_l_polytrope(eq53, 2, inner),
                       rtol=1e-8, atol=1e-10)
    with pytest.raises(ValueError):
        op.q_l_coefficient(eq53, 1, [-1.0])


def test_lss_matches_shooting(eq53, eq13):
    for eq, ref in ((eq53, LSS_53), (eq13, LSS_13)):
        form = op.assemble_Lss(eq, make_grid(eq.R, 800))
        assert np.allclose(form.K, form.K.T) and form.asymmetry < 1e-12
        lam = solve_gsep(form, len(ref)).lambdas
        assert np.allclose(lam, ref, rtol=1e-4)


def test_nl00_and_a_match_frozen_shooting(eq53):
    lam = solve_gsep(op.assemble_Nl00(eq53, make_grid(eq53.R, 1600, 3), 1),
                     5).lambdas
    assert np.allclose(lam, NL00_53_L1, rtol=1e-4)
    lam = solve_gsep(op.assemble_A(eq53, make_grid(eq53.R, 1600)), 5).lambdas
    assert np.allclose(lam, A_53, rtol=1e-4)


def test_nl_pencil_structure(eq53):
    grid = make_grid(eq53.R, 100)
    f0 = op.assemble_Nl(eq53, grid, 0)
    f1 = op.assemble_Nl(eq53, grid, 1)
    assert f0.meta["formulation"] == "energy_pencil"
    assert f0.constraint is not None and f1.constraint is None
    assert len(f1.dofs) == grid.N
    for f in (f0, f1):
        assert np.allclose(f.K, f.K.T) and np.allclose(f.M, f.M.T)
        assert np.linalg.eigvalsh(f.M).min() > 0


def test_translational_residual_second_order(eq15):
    Ns = [200, 400, 800]
    res = [op.translational_residual(eq15, make_grid(eq15.R, N)) for N in Ns]
    order = np.polyfit(np.log(1.0 / np.array(Ns)), np.log(res), 1)[0]
    assert res[-1] < 1e-3 and order > 1.8


def test_hl_of_indicator_closed_form(eq53):
    grid = make_grid(eq53.R, 50)
    out = op.hl_apply(eq53, grid, 0, op.RadialField(grid, np.ones(51)))
    exact = eq53.R**2 / 2 - grid.nodes**2 / 6
    assert np.allclose(out["H"].values, exact, rtol=1e-12)
    assert out["H_at_R"] == pytest.approx(eq53.R**2 / 3, rel=1e-12)


def test_hl_exterior_continuation():
    assert op.hl_exterior(2.0, 1.0, 1, 2.0) == pytest.approx(0.5)


def test_hl_ode_residual_small(eq53):
    grid = make_grid(eq53.R, 200)
    g = op.RadialField.from_function(grid, lambda r: np.exp(-r))
    for l in range(3):
        assert op.hl_ode_residual(eq53, grid, l, g) < 1e-6


def test_gravity_tail(eq53):
    for l in (1, 2):
        closed = (l + 1) * 0.3**2 * eq53.R
        assert op.gravity_tail_numeric(0.3, eq53.R, l) == pytest.approx(
            closed, rel=1e-4)


def test_potential_incompatible_source(eq53):
    grid = make_grid(eq53.R, 40)
    with pytest.raises(op.IncompatibleSource):
        op.solve_potential_l(eq53, grid, 0, op.RadialField(grid, np.ones(41)))
    U = op.solve_potential_l(eq53, grid, 1, op.RadialField(grid, np.ones(41)))
    assert np.all(np.isfinite(U.values))


def test_poincare_constant_positive(eq53):
    c = [op.poincare_constant(eq53, make_grid(eq53.R, N)) for N in (100, 200)]
    assert min(c) > 0 and abs(c[1] - c[0]) / c[1] < 1e-2


def test_divergence_ignores_toroidal(eq53):
    grid = make_grid(eq53.R, 60)
    z = op.RadialField.zeros(grid)
    kt = op.RadialField(grid, np.sin(grid.nodes))
    assert np.all(op.divergence_lm(eq53, 2, z, z).values == 0)
    xi = op.VectorModeLM(2, 1, z, z, kt)
    assert np.all(op.divergence_lm(eq53, 2, xi.psi, xi.chi).values == 0)


def test_divergence_of_radial_field(eq53):
    # psi = 1 gives rho xi = rho r e_r, div = 3 rho + r rho'
    grid = make_grid(eq53.R, 800)
    one = op.RadialField(grid, np.ones(grid.N + 1))
    d = op.divergence_lm(eq53, 0, one, op.RadialField.zeros(grid))
    r = np.linspace(0.1, 0.8, 8) * eq53.R
    pr = eq53.profile(r)
    exact = 3 * pr["rho"] + r * pr["drho_dr"]
    assert np.allclose(np.interp(r, grid.nodes, d.values), exact, rtol=1e-3)


def test_gradient_mode_components():
    grid = make_grid(1.0, 10)
    pot = grid.nodes**2
    m = op.gradient_mode(grid, 2, pot)
    pts, _ = grid.quadrature()
    slopes = np.diff(pot) / grid.widths
    assert np.allclose(m.psi.quad, slopes[:, None] / pts)
    assert np.allclose(m.chi.quad, grid.interpolate(pot) / pts**2)
    assert np.all(op.gradient_mode(grid, 0, pot).chi.values == 0)


def test_mhat_shapes(eq53):
    grid = make_grid(eq53.R, 50)
    g = op.RadialField(grid, np.cos(grid.nodes))
    M1, M2 = op.Mhat_apply(eq53, grid, 2, g)
    assert M1.quad.shape == (50, 4) and np.all(np.isfinite(M2.quad))
    _, M2_0 = op.Mhat_apply(eq53, grid, 0, g)
    assert np.all(M2_0.values == 0)


def test_lambda_form_parts(eq53):
    grid = make_grid(eq53.R, 100)
    g = op.RadialField(grid, np.sin(np.pi * grid.nodes / eq53.R))
    out = op.quadratic_form_Lambda(eq53, grid, 1, g)
    assert out["Lambda"] == pytest.approx(out["acoustic"] - out["gravity"])
    assert out["Lambda"] > 0 and out["tail"] >= 0


def test_i_bound(eq53):
    grid = make_grid(eq53.R, 100)
    psi = op.RadialField(grid, np.cos(grid.nodes))
    out = op.form_I_bound_check(eq53, 1, psi, psi)
    assert out["pass"] and out["I"] <= out["bound"]


def test_vector_mode_validation():
    grid = make_grid(1.0, 4)
    z = op.RadialField.zeros(grid)
    one = op.RadialField(grid, np.ones(5))
    with pytest.raises(ValueError):
        op.VectorModeLM(1, 2, z, z, z)
    with pytest.raises(ValueError):
        op.VectorModeLM(0, 0, z, one, z)
    with pytest.raises(ValueError):
        op.RadialField(grid, np.ones(3))


def test_liouville_length_matches_quadrature(eq53):
    lt = op.liouville_transform(eq53, 1)
    c = lambda r: math.sqrt((eq53.gamma - 1) * eq53.eval_profile(r)["u"])
    ref, _ = quad(lambda r: 1.0 / c(r), 0, eq53.R, limit=400, epsrel=1e-10)
    assert lt.x_plus == pytest.approx(ref, rel=1e-6)
    assert lt.endpoint_class == "LimitCircle" and lt.kappa_const == 0.0
    assert np.all(np.diff(lt.x_of_r) > 0)


def test_liouville_endpoint_model_error(eq53):
    bad = dataclasses.replace(eq53, K=3.0 * eq53.K)
    with pytest.raises(op.EndpointModelError):
        op.liouville_transform(bad, 1)


def test_q_hat_against_finite_differences(eq15):
    # m_xx / m with d/dx = c d/dr, m = (c^6 r^4 / rho^2)^(1/4)
    eq = eq15

    def c(r):
        return np.sqrt((eq.gamma - 1) * eq.profile(r)["u"])

    def m(r):
        return (c(r) ** 6 * r**4 / eq.profile(r)["rho"] ** 2) ** 0.25

    h = 1e-4
    for r in np.array([0.3, 0.5, 0.7]) * eq.R:
        def mx(s):
            return c(s) * (m(s + h) - m(s - h)) / (2 * h)
        mxx = c(r) * (mx(r + h) - mx(r - h)) / (2 * h)
        ref = op.q_l_polytrope(eq, 1, r) + mxx / m(r)
        assert op.q_hat(eq, 1, r) == pytest.approx(ref, rel=1e-5)


def test_nonlocal_block_nearly_symmetric(eq53):
    for l in (0, 1, 2):
        form = op.assemble_Nl(eq53, make_grid(eq53.R, 200), l)
        assert form.asymmetry <= 1e-8


def test_nl_eigenvalues_strictly_increasing(eq53):
    lam = solve_gsep(op.assemble_Nl(eq53, make_grid(eq53.R, 200), 1),
                     10).lambdas
    assert np.all(np.diff(lam) > 0)


def test_q_l_center_asymptotics(eq53):
    # q_l ~ l(l+1) c^2(0) / r^2 near the centre
    r = make_grid(eq53.R, 400).nodes[1:4]
    c2_0 = (eq53.gamma - 1) * eq53.u_center
    for l in (1, 2):
        ratio = op.q_l_coefficient(eq53, l, r)["q"] / (l * (l + 1) * c2_0
                                                         / r**2)
        assert np.all(np.abs(ratio - 1) < 0.05)


def test_potential_manufactured_solution(eq53):
    # U* = cos(r): div(rho grad U*) for degree l in the weak form used
    R = eq53.R

    def source(r, l):
        pr = eq53.profile(r)
        rho, drho = pr["rho"], pr["drho_dr"]
        U, dU, d2U = np.cos(r), -np.sin(r), -np.cos(r)
        return (rho * (d2U + 2 * dU / r) + drho * dU
                - l * (l + 1) * rho * U / r**2)

    for l in (1, 2):
        errs = []
        for N in (50, 100, 200):
            grid = make_grid(R, N)
            f = op.RadialField.from_function(grid, lambda r: source(
                np.maximum(r, 1e-12), l))
            U = op.solve_potential_l(eq53, grid, l, f)
            pr = eq53.profile(grid.nodes)
            inner = grid.nodes < 0.8 * R
            errs.append(np.max(np.abs(U.values - np.cos(grid.nodes))[inner]))
        order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
        assert min(order) > 1.8, (errs, order)


def test_nl00_rejects_infinite_y_norm():
    from polystab.equilibrium import GasLaw, build_equilibrium
    eq = build_equilibrium(GasLaw(1.24))
    with pytest.raises(ValueError):
        op.assemble_Nl00(eq, make_grid(eq.R, 10), 1)


@pytest.mark.parametrize("l,nodes", [(1, slice(1, 4)), (2, slice(4, 16)),
                                     (3, slice(4, 16))])
def test_ground_state_regular_branch(eq53, l, nodes):
    # g ~ r^l near the centre; for l >= 2 the first three cells carry a fixed
    # P1 bias, so the slope is fitted just outside them
    grid = make_grid(eq53.R, 400)
    form = op.assemble_Nl00(eq53, grid, l)
    v = form.full_vector(solve_gsep(form, 1).vectors[:, 0])
    r = grid.nodes[nodes]
    slope = np.polyfit(np.log(r), np.log(np.abs(v[nodes])), 1)[0]
    assert slope == pytest.approx(op.frobenius_roots(l)[0] - 1, rel=0.1)


def test_lss_annihilates_constants_at_four_thirds(eq43):
    form = op.assemble_Lss(eq43, make_grid(eq43.R, 200))
    x = np.ones(len(form.dofs))
    assert np.max(np.abs(form.K @ x)) <= 1e-12 * np.abs(form.K).max()


def test_assembly_asymmetry_recorded(eq53):
    grid = make_grid(eq53.R, 200)
    for form in (op.assemble_Lss(eq53, grid), op.assemble_Nl00(eq53, grid, 1)):
        assert form.asymmetry <= 1e-10
        assert np.array_equal(form.K, form.K.T)


def test_q_l_degree_difference(eq53):
    r = np.linspace(0.1, 0.9, 9) * eq53.R
    diff = op.q_l_polytrope(eq53, 1, r) - op.q_l_polytrope(eq53, 0, r)
    assert np.allclose(diff, 2 * eq53.profile(r)["dPdrho"] / r**2, rtol=1e-14)


def test_q_l_finite_near_gamma_two():
    from polystab.equilibrium import GasLaw, build_equilibrium
    eq = build_equilibrium(GasLaw(2 - 1e-3))
    r = np.linspace(0.05, 0.95, 19) * eq.R
    assert np.all(np.isfinite(op.q_l_coefficient(eq, 2, r)["q"]))


def test_a_coefficient_bounded(eq53):
    form = op.assemble_A(eq53, make_grid(eq53.R, 400))
    assert np.isfinite(form.meta["max_drho_du"])


def test_acoustic_depth_square_root_law(eq53):
    lt = op.liouville_transform(eq53, 1)
    s = eq53.R - lt.r[-20:-1]
    depth = lt.x_plus - lt.x_of_r[-20:-1]
    assert np.polyfit(np.log(s), np.log(depth), 1)[0] == pytest.approx(
        0.5, rel=0.02)
    c = 2 / math.sqrt((eq53.gamma - 1) * eq53.K)
    assert depth[-1] == pytest.approx(c * math.sqrt(s[-1]), rel=1e-2)


def test_zero_inputs(eq53):
    grid = make_grid(eq53.R, 30)
    z = op.RadialField.zeros(grid)
    for l in (0, 2):
        assert not np.any(op.hl_apply(eq53, grid, l, z)["H"].values)
        assert not np.any(op.divergence_lm(eq53, l, z, z).values)
        M1, M2 = op.Mhat_apply(eq53, grid, l, z)
        assert not np.any(M1.values) and not np.any(M2.values)
        assert op.quadratic_form_Lambda(eq53, grid, l, z)["Lambda"] == 0.0
    assert not np.any(op.solve_potential_l(eq53, grid, 1, z).values)
    assert np.allclose(op.solve_potential_l(eq53, grid, 0, z).values, 0)
    assert op.form_I_bound_check(eq53, 1, z, z)["I"] == 0.0


def test_i_scales_quadratically(eq53):
    grid = make_grid(eq53.R, 60)
    psi = op.RadialField(grid, np.sin(grid.nodes))
    chi = op.RadialField(grid, np.cos(grid.nodes))
    a = op.form_I_bound_check(eq53, 2, psi, chi)["I"]
    b = op.form_I_bound_check(eq53, 2, 2.0 * psi, 2.0 * chi)["I"]
    assert b == pytest.approx(4 * a, rel=1e-12)


def test_radial_divergence_second_order(eq53):
    one = None
    errs = []
    r = np.linspace(0.2, 0.8, 7) * eq53.R
    pr = eq53.profile(r)
    exact = 3 * pr["rho"] + r * pr["drho_dr"]
    for N in (100, 200, 400):
        grid = make_grid(eq53.R, N)
        one = op.RadialField(grid, np.ones(N + 1))
        d = op.divergence_lm(eq53, 0, one, op.RadialField.zeros(grid))
        errs.append(np.max(np.abs(np.interp(r, grid.nodes, d.values)
                                  - exact)))
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


def test_radial_potential_identity(eq53):
    # for g = div(rho r psi e_r): (1/r) dH_0/dr + rho psi = 0
    grid = make_grid(eq53.R, 400)
    psi = op.RadialField.from_function(grid, np.cos)
    g = op.divergence_lm(eq53, 0, psi, op.RadialField.zeros(grid))
    dH = op.hl_apply(eq53, grid, 0, g)["dH"].values
    r = grid.nodes
    inner = (r > 0.2 * eq53.R) & (r < 0.8 * eq53.R)
    res = dH[inner] / r[inner] + eq53.profile(r[inner])["rho"] * psi.values[inner]
    assert np.max(np.abs(res)) < 1e-8


def test_pointwise_mhat_eigen_consistency_interior(eq53):
    # div((1/lambda) M_hat g) = g away from both endpoints, converging at
    # second order; the discrete route is exact everywhere
    errs = []
    for N in (200, 400):
        grid = make_grid(eq53.R, N)
        form = op.assemble_Nl(eq53, grid, 1)
        ms = solve_gsep(form, 3)
        lam, g = ms.lambdas[1], form.full_vector(ms.vectors[:, 1])
        M1, M2 = op.Mhat_apply(eq53, grid, 1, op.RadialField(grid, g))
        d = op.divergence_lm(eq53, 1, (1 / lam) * M1,
                             (1 / (lam * math.sqrt(2))) * M2).values
        inner = (grid.nodes > 0.2 * eq53.R) & (grid.nodes < 0.8 * eq53.R)
        errs.append(np.max(np.abs(d - g)[inner]) / np.max(np.abs(g)))
    assert errs[-1] < 1e-3 and errs[0] / errs[1] > 3.5
