import csv
import io
import math

import numpy as np
import pytest

from polystab import dynamics as dyn
from polystab import operators as op
from polystab.discretization import make_grid
from polystab.eigensolver import solve_gsep


@pytest.fixture(scope="module")
def setup(eq53):
    form = op.assemble_Nl(eq53, make_grid(eq53.R, 120), 2)
    ms = solve_gsep(form)
    return eq53, form, ms


def _pick(ms, k=0):
    pos = np.nonzero((ms.lambdas > 0) & ~ms.zero_mask())[0]
    return float(ms.lambdas[pos[k]]), ms.vectors[:, pos[k]]


def test_mode_gradient_divergence(setup):
    eq, form, ms = setup
    lam, phi = _pick(ms)
    grad = dyn.mode_gradient(form, lam, phi)
    d = op.divergence_lm(eq, 2, grad.psi, grad.chi)
    target = lam * form.full_vector(phi)
    assert np.max(np.abs(d.values - target)) < 1e-8 * np.max(np.abs(target))


def test_mode_gradient_needs_pencil(eq53):
    form = op.assemble_Nl00(eq53, make_grid(eq53.R, 40), 1)
    with pytest.raises(ValueError):
        dyn.mode_gradient(form, 1.0, np.ones(len(form.dofs)))


def test_resolvent_solves_equation(setup):
    eq, form, ms = setup
    grid = form.grid
    f = op.VectorModeLM(2, 0, op.RadialField(grid, np.sin(grid.nodes)),
                        op.RadialField(grid, np.cos(grid.nodes)),
                        op.RadialField.zeros(grid))
    lam = 0.5 * (ms.lambdas[1] + ms.lambdas[2])
    xi = dyn.resolvent_apply(eq, form, lam, f, modes=ms)
    assert dyn.resolvent_residual(eq, form, lam, f, xi) < 1e-8


def test_resolvent_near_spectrum(setup):
    eq, form, ms = setup
    f = op.VectorModeLM.zeros(form.grid, 2)
    with pytest.raises(dyn.NearSpectrum):
        dyn.resolvent_apply(eq, form, float(ms.lambdas[3]), f, modes=ms)
    with pytest.raises(dyn.NearSpectrum):
        dyn.resolvent_apply(eq, form, 0.0, f, modes=ms)


def test_compatible_data_periodic(setup):
    eq, form, ms = setup
    lam, phi = _pick(ms, 1)
    T = 2 * math.pi / math.sqrt(lam)
    v0 = dyn.compatible_velocity(form, lam, phi, 0.7)
    tr = dyn.evolve_mode(eq, form, lam, phi, 0.7, v0, 0.2 * T + T * np.arange(4))
    assert tr.periodic_flag and tr.B_field.norm(eq) == 0.0
    ref = tr.snapshots[0]
    for s in tr.snapshots[1:]:
        assert (s + (-1.0) * ref).norm(eq) <= 1e-8 * ref.norm(eq)


def test_toroidal_residue_linear_growth(setup):
    eq, form, ms = setup
    lam, phi = _pick(ms)
    T = 2 * math.pi / math.sqrt(lam)
    v0 = dyn.compatible_velocity(form, lam, phi, 1.0)
    v0 = v0 + dyn.toroidal_field(form.grid, 2, np.sin(form.grid.nodes))
    tr = dyn.evolve_mode(eq, form, lam, phi, 1.0, v0,
                         T * np.linspace(1e4, 2e4, 21))
    assert not tr.periodic_flag
    slope, r2 = dyn.late_slope(tr)
    assert slope == pytest.approx(tr.B_field.norm(eq), rel=1e-6)
    assert r2 > 0.999


def test_incompatible_initial_data(setup):
    eq, form, ms = setup
    lam, phi = _pick(ms)
    v0 = 2.0 * dyn.compatible_velocity(form, lam, phi, 1.0)
    with pytest.raises(dyn.IncompatibleInitialData):
        dyn.evolve_mode(eq, form, lam, phi, 1.0, v0, [0.0, 1.0])
    with pytest.raises(ValueError):
        dyn.evolve_mode(eq, form, -1.0, phi, 1.0, v0, [0.0])


def test_toroidal_field_needs_degree():
    with pytest.raises(ValueError):
        dyn.toroidal_field(make_grid(1.0, 4), 0, np.zeros(5))


def test_exponential_branch(eq13):
    grid = make_grid(eq13.R, 200)
    ms = solve_gsep(op.assemble_Lss(eq13, grid), 1)
    lam = float(ms.lambdas[0])
    assert lam < 0
    psi = op.RadialField(grid, ms.vectors[:, 0])
    tr = dyn.negative_mode_growth(eq13, lam, psi, 1.0,
                                  np.linspace(0, 10 / abs(lam), 20))
    assert dyn.growth_rate(tr) == pytest.approx(abs(lam), rel=1e-10)
    with pytest.raises(dyn.NotUnstable):
        dyn.negative_mode_growth(eq13, 0.5, psi, 1.0, [0.0])


def test_trajectory_csv(setup, tmp_path):
    eq, form, ms = setup
    lam, phi = _pick(ms)
    v0 = dyn.compatible_velocity(form, lam, phi, 1.0)
    tr = dyn.evolve_mode(eq, form, lam, phi, 1.0, v0, [0.0, 0.5, 1.0])
    text = tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "norm", "psi", "chi", "kappa_t"]
    assert len(rows) == 4 and float(rows[1][1]) == 0.0
    assert (tmp_path / "t.csv").read_text() == text


def test_resolvent_zero_source(setup):
    eq, form, ms = setup
    f = op.VectorModeLM.zeros(form.grid, 2)
    xi = dyn.resolvent_apply(eq, form, 0.5 * float(ms.lambdas[0]), f, modes=ms)
    assert xi.norm(eq) == 0.0


def test_resolvent_divergence_matches_density(setup):
    eq, form, ms = setup
    grid = form.grid
    f = op.VectorModeLM(2, 0, op.RadialField(grid, np.cos(grid.nodes)),
                        op.RadialField.zeros(grid), op.RadialField.zeros(grid))
    lam = 0.5 * (ms.lambdas[0] + ms.lambdas[1])
    xi, det = dyn.resolvent_apply(eq, form, lam, f, modes=ms,
                                  return_details=True)
    d = op.divergence_lm(eq, 2, xi.psi, xi.chi).values
    g = form.full_vector(det["g"])
    assert np.max(np.abs(d - g)) <= 1e-8 * np.max(np.abs(g))


def test_zero_amplitude_is_rest(setup):
    eq, form, ms = setup
    lam, phi = _pick(ms)
    v0 = op.VectorModeLM.zeros(form.grid, 2)
    tr = dyn.evolve_mode(eq, form, lam, phi, 0.0, v0, [0.0, 1.0, 2.0])
    assert np.all(tr.norms == 0) and tr.periodic_flag


def test_radial_growth_has_no_linear_term(eq13):
    grid = make_grid(eq13.R, 50)
    ms = solve_gsep(op.assemble_Lss(eq13, grid), 1)
    psi = op.RadialField(grid, ms.vectors[:, 0])
    tr = dyn.negative_mode_growth(eq13, float(ms.lambdas[0]), psi, 0.0,
                                  [0.0, 1.0])
    assert tr.B_field.norm(eq13) == 0.0 and np.all(tr.norms == 0)
