import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from tvjump.fidelity import (
    Fidelity,
    psi_conj,
    psi_grad,
    psi_hessian,
    psi_prox,
    psi_value,
    quadratic_A_matrix,
)

L2 = Fidelity.squared_l2()
HUB = Fidelity.huber(1.0)
vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_construction():
    assert Fidelity("squaredl2") == L2
    assert (L2.lambda_bound, L2.Lambda_bound) == (1.0, 1.0)
    assert (HUB.lambda_bound, HUB.Lambda_bound) == (0.0, 1.0)
    with pytest.raises(ValueError):
        Fidelity("huber")
    with pytest.raises(ValueError):
        Fidelity("l1")


def test_values():
    assert psi_value(L2, [0.0, 0.0]) == 0.0
    assert psi_value(L2, [3.0, 4.0]) == 12.5
    assert psi_value(HUB, [3.0, 4.0]) == 4.5


def test_huber_value_by_integrating_gradient():
    # psi(r e) = int_0^r |clip(s)| ds along a ray
    e = np.array([0.6, 0.8])
    r = 5.0
    integral, _ = quad(lambda s: psi_grad(HUB, s * e) @ e, 0, r, points=[1.0])
    assert psi_value(HUB, r * e) == pytest.approx(integral, abs=1e-10)


def test_prox_examples():
    assert psi_prox(L2, [0.0], [1.0], 1.0)[0] == pytest.approx(0.5)
    assert np.allclose(psi_prox(L2, [0.3, 0.2], [0.3, 0.2], 2.0), [0.3, 0.2])
    assert np.allclose(psi_prox(HUB, [2.0, -1.0], [0.0, 0.0], 1e-12), [2.0, -1.0])
    with pytest.raises(ValueError):
        psi_prox(L2, [0.0], [0.0], 0.0)


@pytest.mark.parametrize("phi", [L2, HUB, Fidelity.huber(0.1)], ids=str)
@pytest.mark.parametrize("v,f,t", [(0.0, 1.0, 1.0), (3.0, -1.0, 0.5), (-0.05, 0.0, 2.0), (4.0, 0.5, 0.1)])
def test_prox_golden_section_oracle(phi, v, f, t):
    res = minimize_scalar(
        lambda w: (w - v) ** 2 / (2 * t) + psi_value(phi, [w - f]),
        bracket=(-10, 10),
        method="golden",
        tol=1e-12,
    )
    assert psi_prox(phi, [v], [f], t)[0] == pytest.approx(res.x, abs=1e-7)


@settings(max_examples=80, deadline=None)
@given(vec3, vec3, vec3, st.floats(0.01, 10))
def test_prox_firmly_nonexpansive(a, b, f, t):
    for phi in (L2, HUB):
        pa, pb = psi_prox(phi, a, f, t), psi_prox(phi, b, f, t)
        assert (pa - pb) @ (pa - pb) <= (pa - pb) @ (a - b) + 1e-10


@settings(max_examples=80, deadline=None)
@given(vec3, vec3)
def test_gradient_monotonicity_moduli(v, w):
    for phi in (L2, HUB):
        d = (psi_grad(phi, v) - psi_grad(phi, w)) @ (v - w)
        n2 = (v - w) @ (v - w)
        assert phi.lambda_bound * n2 - 1e-10 <= d <= phi.Lambda_bound * n2 + 1e-10


def test_gradient_finite_difference():
    rng = np.random.default_rng(0)
    eps = 1e-6
    for phi in (L2, HUB):
        for _ in range(200):
            v = rng.normal(scale=2, size=3)
            if phi.family == "huber" and abs(np.linalg.norm(v) - phi.delta) < 1e-3:
                continue
            fd = np.array([(psi_value(phi, v + eps * e) - psi_value(phi, v - eps * e)) / (2 * eps) for e in np.eye(3)])
            assert np.allclose(psi_grad(phi, v), fd, atol=1e-6)


def test_huber_gradient_bounded():
    v = np.random.default_rng(1).normal(scale=10, size=(1000, 2))
    assert np.all(np.linalg.norm(psi_grad(HUB, v), axis=-1) <= 1.0 + 1e-12)


def test_conjugate():
    assert psi_conj(L2, [3.0, 4.0]) == 12.5
    assert psi_conj(HUB, [0.6, 0.8]) == pytest.approx(0.5)
    assert psi_conj(HUB, [3.0, 4.0]) == np.inf
    # Fenchel-Young with equality at q = grad psi(v)
    v = np.array([2.0, -1.0])
    q = psi_grad(HUB, v)
    assert psi_value(HUB, v) + psi_conj(HUB, q) == pytest.approx(v @ q)


def test_A_matrix_examples():
    assert np.array_equal(quadratic_A_matrix(L2, [5.0, 0.0], [-3.0, 1.0]), np.eye(2))
    assert np.array_equal(quadratic_A_matrix(Fidelity.huber(10.0), [1.0, 2.0], [3.0, -1.0]), np.eye(2))
    A = quadratic_A_matrix(HUB, [2.0, 0.0], [4.0, 0.0])
    # dense oracle: average of finite-difference Hessians along the segment
    s = np.linspace(0, 1, 2001)
    pts = np.array([2.0, 0.0]) + s[:, None] * np.array([2.0, 0.0])
    eps = 1e-5
    H = np.zeros((len(s), 2, 2))
    for j, e in enumerate(np.eye(2)):
        H[:, :, j] = (psi_grad(HUB, pts + eps * e) - psi_grad(HUB, pts - eps * e)) / (2 * eps)
    ref = np.trapezoid(H, s, axis=0)
    assert np.allclose(A, ref, atol=1e-6)
    assert np.allclose(A, np.diag([0.0, np.log(2.0) / 2]), atol=1e-12)
    ev = np.linalg.eigvalsh(A)
    assert np.all(ev >= -1e-12) and np.all(ev <= 1 + 1e-12)


def test_A_matrix_crossing_kink():
    a, b = np.array([-2.0, 0.3]), np.array([2.0, 0.3])
    A = quadratic_A_matrix(HUB, a, b)
    s = np.linspace(0, 1, 200001)
    H = psi_hessian(HUB, a + s[:, None] * (b - a))
    ref = H.mean(axis=0)
    assert np.allclose(A, A.T)
    assert np.allclose(A, ref, atol=1e-4)
