import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qlrb.fem import (
    apply_weighted_stiffness,
    assemble_mass,
    assemble_v_gram,
    build_mesh,
    elem_gradient,
    gradient_matrix,
    h_project,
    load_vector,
    weighted_stiffness,
)


def hat(mesh, i):
    """Nodal hat function of interior node i, as a callable."""
    xs = np.concatenate([[0.0], mesh.nodes, [1.0]])
    vals = np.zeros_like(xs)
    vals[i + 1] = 1.0
    return lambda x: np.interp(x, xs, vals)


def hat_slope(mesh, i):
    def d(x):
        left, right = mesh.nodes[i] - mesh.h, mesh.nodes[i] + mesh.h
        if left < x < mesh.nodes[i]:
            return 1.0 / mesh.h
        if mesh.nodes[i] < x < right:
            return -1.0 / mesh.h
        return 0.0
    return d


def quad_matrix(mesh, integrand):
    n = mesh.n_dof
    out = np.zeros((n, n))
    brk = np.linspace(0, 1, mesh.n_elem + 1)
    for i in range(n):
        for j in range(max(0, i - 1), min(n, i + 2)):
            out[i, j] = sum(quad(lambda x: integrand(i, j, x), a, b)[0]
                            for a, b in zip(brk[:-1], brk[1:]))
    return out


def test_mesh_basic():
    m = build_mesh(4)
    assert m.h == 0.25 and m.n_dof == 3
    np.testing.assert_allclose(m.elem_midpoints, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(m.nodes, [0.25, 0.5, 0.75])
    assert build_mesh(2).n_dof == 1 and build_mesh(2).nodes[0] == 0.5
    assert build_mesh(100).n_dof == 99


@pytest.mark.parametrize("n", [0, 1, -3])
def test_mesh_rejects_small(n):
    with pytest.raises(ValueError):
        build_mesh(n)


@given(st.integers(2, 300))
def test_mesh_invariants(n):
    m = build_mesh(n)
    assert len(m.nodes) == n - 1 == m.n_dof
    assert np.all(np.diff(m.nodes) > 0) and m.nodes[0] > 0 and m.nodes[-1] < 1
    np.testing.assert_allclose(m.nodes, (np.arange(n - 1) + 1) * m.h)


def test_mass_against_quadrature():
    mesh = build_mesh(6)
    ref = quad_matrix(mesh, lambda i, j, x: hat(mesh, i)(x) * hat(mesh, j)(x))
    np.testing.assert_allclose(assemble_mass(mesh).toarray(), ref, atol=1e-12)
    h = mesh.h
    M = assemble_mass(mesh).toarray()
    assert np.allclose(np.diag(M), 2 * h / 3) and np.allclose(np.diag(M, 1), h / 6)
    np.testing.assert_allclose(assemble_mass(build_mesh(2)).toarray(), [[2 * 0.5 / 3]])


def test_v_gram_against_quadrature():
    mesh = build_mesh(5)
    ref = quad_matrix(mesh, lambda i, j, x: hat_slope(mesh, i)(x) * hat_slope(mesh, j)(x))
    np.testing.assert_allclose(assemble_v_gram(mesh).toarray(), ref, atol=1e-10)
    np.testing.assert_allclose(assemble_v_gram(build_mesh(2)).toarray(), [[4.0]])


@pytest.mark.parametrize("n", [2, 7, 100])
def test_inner_products_spd(n):
    mesh = build_mesh(n)
    for A in (assemble_mass(mesh).toarray(), assemble_v_gram(mesh).toarray()):
        assert np.max(np.abs(A - A.T)) < 1e-14
        np.linalg.cholesky(A)


def test_weighted_stiffness_cases():
    mesh = build_mesh(4)
    np.testing.assert_allclose(weighted_stiffness(mesh, np.ones(4)).toarray(),
                               assemble_v_gram(mesh).toarray())
    np.testing.assert_allclose(weighted_stiffness(mesh, 3.5 * np.ones(4)).toarray(),
                               3.5 * assemble_v_gram(mesh).toarray())
    # indicator of the second element couples nodes 0 and 1 only
    w = np.array([0.0, 1.0, 0.0, 0.0])
    A = weighted_stiffness(mesh, w).toarray()
    expect = np.zeros((3, 3))
    expect[:2, :2] = np.array([[1, -1], [-1, 1]]) / mesh.h
    np.testing.assert_allclose(A, expect)
    with pytest.raises(ValueError):
        weighted_stiffness(mesh, np.ones(3))


@settings(max_examples=30)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_weighted_stiffness_linear_and_consistent(n, seed):
    rng = np.random.default_rng(seed)
    mesh = build_mesh(n)
    w1, w2 = rng.random(n), rng.random(n)
    u = rng.standard_normal(mesh.n_dof)
    A = weighted_stiffness(mesh, w1 + w2).toarray()
    B = weighted_stiffness(mesh, w1).toarray() + weighted_stiffness(mesh, w2).toarray()
    assert np.max(np.abs(A - B)) < 1e-13 * max(1.0, np.abs(A).max())
    G = gradient_matrix(mesh)
    np.testing.assert_allclose(A, G.T @ (mesh.h * (w1 + w2)[:, None] * G), atol=1e-10)
    np.testing.assert_allclose(apply_weighted_stiffness(mesh, w1, u),
                               weighted_stiffness(mesh, w1) @ u, atol=1e-9)


def test_elem_gradient():
    mesh = build_mesh(2)
    np.testing.assert_allclose(elem_gradient(mesh, np.array([1.0])), [2.0, -2.0])
    mesh = build_mesh(10)
    assert np.all(elem_gradient(mesh, np.zeros(9)) == 0)
    x = mesh.nodes
    g = elem_gradient(mesh, x * (1 - x))
    assert np.all(np.diff(g) < 0)
    # exact for the midpoint-sampled derivative of a quadratic
    np.testing.assert_allclose(g, 1 - 2 * mesh.elem_midpoints, atol=1e-13)
    np.testing.assert_allclose(gradient_matrix(mesh) @ x, elem_gradient(mesh, x))


def test_elem_gradient_of_piecewise_linear_is_exact():
    mesh = build_mesh(8)
    tent = lambda x: np.minimum(x, 1 - x)  # noqa: E731  kinks at a node
    g = elem_gradient(mesh, tent(mesh.nodes))
    np.testing.assert_allclose(g, np.where(mesh.elem_midpoints < 0.5, 1.0, -1.0), atol=1e-12)


def _load_error(n):
    mesh = build_mesh(n)
    f = lambda x: np.sin(2 * np.pi * x)  # noqa: E731
    ref = [quad(lambda x: f(x) * hat(mesh, i)(x), 0, 1, points=list(mesh.nodes), limit=200)[0]
           for i in range(mesh.n_dof)]
    return np.max(np.abs(load_vector(mesh, f) - ref))


def test_load_vector_quadrature():
    # 2-point Gauss is exact for cubics, so each entry errs by O(h^5)
    e8, e16 = _load_error(8), _load_error(16)
    assert e8 < 1e-4
    assert e8 / e16 > 24


def test_load_vector_exact_for_polynomials():
    mesh = build_mesh(6)
    f = lambda x: x ** 2 - 0.3 * x  # noqa: E731  degree 2 times hat = cubic
    ref = [quad(lambda x: f(x) * hat(mesh, i)(x), 0, 1, points=list(mesh.nodes))[0]
           for i in range(mesh.n_dof)]
    np.testing.assert_allclose(load_vector(mesh, f), ref, atol=1e-14)


def test_h_project():
    mesh = build_mesh(100)
    assert np.all(h_project(mesh, lambda x: 0 * x) == 0)
    u = h_project(mesh, lambda x: np.sin(2 * np.pi * x))
    assert np.max(np.abs(u - np.sin(2 * np.pi * mesh.nodes))) < 10 * mesh.h ** 2
    coarse = build_mesh(5)
    c = np.array([0.3, -1.0, 2.0, 0.5])
    f = lambda x: np.interp(x, np.r_[0, coarse.nodes, 1], np.r_[0, c, 0])  # noqa: E731
    np.testing.assert_allclose(h_project(coarse, f), c, atol=1e-12)
    # idempotence: projecting the projection changes nothing
    u = h_project(coarse, np.cos)
    g = lambda x: np.interp(x, np.r_[0, coarse.nodes, 1], np.r_[0, u, 0])  # noqa: E731
    np.testing.assert_allclose(h_project(coarse, g), u, atol=1e-12)
