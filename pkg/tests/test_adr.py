import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from himodrom.adr import (
    AdrProblemSpec,
    Ellipse,
    assemble_adr,
    assemble_adr_direct,
    ellipse_load,
    reference_adr_spec,
    solve_himod,
)
from himodrom.bases1d import dirichlet, free, robin
from himodrom.errors import ConfigurationError, GeometryError
from himodrom.geometry import DomainMap, build_quadrature
from himodrom.himod import bilinear, build_space, evaluate_field, evaluate_gradient, inner_product

from conftest import ADR_MU
from oracles import adr_galerkin_residual, ellipse_load_oracle


def _identity_space(tag, m, n_el=6, length=1.0, degree=1):
    quad = build_quadrature(n_el, 4, 32, length)
    return build_space(DomainMap(length), quad, degree, tag, m)


def test_identity_map_diffusion_is_separable():
    """Mode blocks of the diffusion operator: axial stiffness + (k pi)^2 axial mass."""
    n_el, m = 6, 3
    space = _identity_space(dirichlet(), m, n_el)
    diff = (bilinear(space, space, "x", "x") + bilinear(space, space, "y", "y")).toarray()
    h, n = 1.0 / n_el, n_el + 1
    stiff = (np.diag(np.r_[1, 2 * np.ones(n - 2), 1]) - np.eye(n, k=1) - np.eye(n, k=-1)) / h
    mass = h / 6 * (np.diag(np.r_[2, 4 * np.ones(n - 2), 2]) + np.eye(n, k=1) + np.eye(n, k=-1))
    for k in range(m):
        for j in range(m):
            blk = diff[k * n:(k + 1) * n, j * n:(j + 1) * n]
            ref = stiff + ((k + 1) * np.pi) ** 2 * mass if j == k else 0.0
            np.testing.assert_allclose(blk, ref, atol=1e-8)


def test_single_mode_l2_is_tridiagonal_mass():
    n_el = 5
    space = _identity_space(free(), 1, n_el)
    x = inner_product(space, "L2").matrix.toarray()
    h, n = 1.0 / n_el, n_el + 1
    mass = h / 6 * (np.diag(np.r_[2, 4 * np.ones(n - 2), 2]) + np.eye(n, k=1) + np.eye(n, k=-1))
    np.testing.assert_allclose(x, mass, atol=1e-14)


def test_h1_norm_of_linear_function():
    length = 3.0
    space = _identity_space(free(), 2, 7, length)
    coeffs = np.zeros(space.dim)
    coeffs[: space.n_axial] = space.fem.nodes
    x = inner_product(space, "H1")
    assert x.norm(coeffs) ** 2 == pytest.approx(length**3 / 3 + length, rel=1e-8)


def test_evaluate_field_examples(adr_ref):
    space = adr_ref.space
    pts = np.array([[0.3, 0.0], [2.0, 0.1], [3.9, -0.2]])
    assert np.all(evaluate_field(space, np.zeros(space.dim), pts) == 0)
    c = np.zeros(space.dim)
    c[: space.n_axial] = 1.7
    yh = space.dmap.psi(pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(evaluate_field(space, c, pts), 1.7 * space.modal.eval(yh)[0], rtol=1e-12)


def test_evaluate_field_brute_force(adr_small):
    space = adr_small.space
    rng = np.random.default_rng(1)
    c = rng.standard_normal(space.dim)
    x = space.quad.axial_nodes[3, 1]
    yh = space.quad.transverse_nodes[5]
    y = float(space.dmap.inverse(x, yh))
    theta, _ = space.fem.basis_at(np.array([x]))
    phi = space.modal.eval(np.array(yh))
    ref = sum(c[space.dof(k, i)] * theta[0, i] * phi[k] for k in range(space.m) for i in range(space.n_axial))
    assert evaluate_field(space, c, [[x, y]])[0] == pytest.approx(ref, rel=1e-12)


def test_gradient_matches_finite_differences(adr_small):
    space = adr_small.space
    c = np.random.default_rng(2).standard_normal(space.dim)
    p = np.array([[1.23, 0.05]])
    g = evaluate_gradient(space, c, p)[0]
    h = 1e-6
    fx = (evaluate_field(space, c, p + [h, 0]) - evaluate_field(space, c, p - [h, 0])) / (2 * h)
    fy = (evaluate_field(space, c, p + [0, h]) - evaluate_field(space, c, p - [0, h])) / (2 * h)
    np.testing.assert_allclose(g, [fx[0], fy[0]], rtol=1e-6)


def test_points_outside_domain_rejected(adr_small):
    with pytest.raises(GeometryError):
        evaluate_field(adr_small.space, np.zeros(adr_small.space.dim), [[1.0, 0.9]])


def test_zero_data_gives_zero_solution(adr_small):
    aff = assemble_adr(adr_small.space, AdrProblemSpec(forcing=()))
    assert np.all(solve_himod(aff, ADR_MU) == 0)


def test_solution_is_positive_and_deterministic(adr_ref):
    u1 = solve_himod(adr_ref.affine, ADR_MU)
    u2 = solve_himod(adr_ref.affine, ADR_MU)
    assert np.array_equal(u1, u2)
    assert np.all(np.isfinite(u1)) and adr_ref.x.norm(u1) > 0
    assert np.all(u1[adr_ref.affine.constrained] == 0)
    assert adr_ref.affine.dim == 8 * 81


def test_linearity_in_forcing(adr_ref):
    spec = reference_adr_spec()
    doubled = AdrProblemSpec(forcing=tuple(Ellipse(e.center_x, e.center_y, e.coef_x, e.coef_y, e.radius, 2 * e.weight)
                                           for e in spec.forcing))
    u1 = solve_himod(adr_ref.affine, ADR_MU)
    u2 = solve_himod(assemble_adr(adr_ref.space, doubled), ADR_MU)
    assert np.abs(u2 - 2 * u1).max() <= 1e-12 * np.abs(u1).max()


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(1.0, 100.0), min_size=4, max_size=4))
def test_affine_consistency(adr_small, mu):
    direct = assemble_adr_direct(adr_small.space, adr_small.spec, mu)
    affine = adr_small.affine.matrix(mu)
    assert abs(direct - affine).max() <= 1e-12 * abs(direct).max()


def test_affine_batch_and_rhs(adr_small):
    aff = adr_small.affine
    mus = np.array([[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]])
    th = aff.theta_a_values(mus)
    assert th.shape == (2, 5)
    np.testing.assert_array_equal(th[:, :4], mus)
    np.testing.assert_array_equal(th[:, 4], 1.0)


def test_ellipse_load_matches_nested_quadrature(adr_ref):
    for ell in adr_ref.spec.forcing:
        load = ellipse_load(adr_ref.space, ell)
        ref = ellipse_load_oracle(adr_ref.space, ell)
        assert np.abs(load - ref).max() <= 1e-12 * np.abs(ref).max()


def test_galerkin_orthogonality_double_resolution(adr_ref):
    u = solve_himod(adr_ref.affine, ADR_MU)
    res = adr_galerkin_residual(adr_ref.space, adr_ref.spec, ADR_MU, u)
    res[adr_ref.affine.constrained] = 0.0
    assert np.abs(res).max() <= 1e-8


def test_fixed_coefficients_in_spec(adr_small):
    spec = AdrProblemSpec(nu=5.0, b_x=20.0, b_y="param", sigma=0.0, forcing=reference_adr_spec().forcing)
    aff = assemble_adr(adr_small.space, spec)
    mu = np.array([99.0, 99.0, 75.0, 99.0])
    ref = assemble_adr_direct(adr_small.space, adr_small.spec, [5.0, 20.0, 75.0, 0.0])
    assert abs(aff.matrix(mu) - ref).max() <= 1e-12 * abs(ref).max()


def test_boundary_data_loads(adr_small):
    base = solve_himod(assemble_adr(adr_small.space, AdrProblemSpec()), ADR_MU)
    assert np.all(base == 0)
    for kw in ({"outflow_h": 1.0}, {"lateral_l": 1.0}, {"forcing_constant": 1.0}):
        u = solve_himod(assemble_adr(adr_small.space, AdrProblemSpec(**kw)), ADR_MU)
        assert adr_small.x.norm(u) > 0


def test_lateral_load_is_wall_length():
    space = _identity_space(free(), 2, 4, 2.0)
    from himodrom.himod import lateral_load
    ones = np.zeros(space.dim)
    ones[: space.n_axial] = 1.0
    assert lateral_load(space) @ ones == pytest.approx(2 * 2.0, rel=1e-13)


@pytest.mark.parametrize("kw", [{"nu": -1.0}, {"sigma": -1.0}, {"inflow_g": 1.0}, {"nu": "x"}, {"rho": -1.0}])
def test_invalid_specs(kw):
    with pytest.raises(ConfigurationError):
        AdrProblemSpec(**kw)


def test_wrong_parameter_shape(adr_small):
    with pytest.raises(ConfigurationError):
        solve_himod(adr_small.affine, [1.0, 2.0])
