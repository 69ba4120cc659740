import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import ortho_group

from tvjump.specnorm import (
    SpectralRegularizer,
    dual_value,
    project_dual_ball,
    project_lq_ball,
    project_simplex_ball,
    recession,
    singular_values,
    svd,
    symmetric_gauge,
    value,
    von_neumann_gap,
)

NORMS = [
    SpectralRegularizer("frobenius"),
    SpectralRegularizer("nuclear"),
    SpectralRegularizer("spectral"),
    SpectralRegularizer("schatten", p=1.5),
    SpectralRegularizer("schatten", p=3.0),
    SpectralRegularizer("lpq", p=1.5, q=2.5),
]
SPECTRAL = NORMS[:5] + [SpectralRegularizer("logsumexp")]
D = np.diag([3.0, 4.0])


def _ids(rs):
    return [str(r) for r in rs]


def test_constructor_validation():
    with pytest.raises(ValueError):
        SpectralRegularizer("kyfan")
    with pytest.raises(ValueError):
        SpectralRegularizer("schatten", p=1.0)
    with pytest.raises(ValueError):
        SpectralRegularizer("lpq", p=2.0, q=math.inf)
    with pytest.raises(ValueError):
        SpectralRegularizer("nuclear", weight=0.0)


def test_svd_examples():
    assert np.allclose(svd(D).sigma, [4, 3])
    assert np.allclose(svd(np.zeros((3, 2))).sigma, 0)
    rng = np.random.default_rng(3)
    for shape in [(3, 2), (2, 2), (4, 2), (3, 1), (3, 3), (2, 4)]:
        A = rng.normal(size=shape)
        s = svd(A)
        assert np.allclose(s.reconstruct(), A, atol=1e-10 * np.linalg.norm(A))
        assert np.all(np.diff(s.sigma) <= 0) and np.all(s.sigma >= 0)
        p = min(shape)
        assert np.allclose(s.U.T @ s.U, np.eye(p), atol=1e-10)
        assert np.allclose(s.V.T @ s.V, np.eye(p), atol=1e-10)
        assert np.allclose(s.sigma, np.linalg.svd(A, compute_uv=False), atol=1e-12)


def test_svd_rank_one_two_columns():
    u = np.array([[1.0], [2.0], [2.0]])
    A = u @ np.array([[0.6, 0.8]])
    s = svd(A)
    assert np.allclose(s.sigma, [3.0, 0.0], atol=1e-12)
    assert np.allclose(s.reconstruct(), A, atol=1e-12)
    assert np.allclose(s.U.T @ s.U, np.eye(2), atol=1e-12)


def test_batched_singular_values_match_numpy():
    A = np.random.default_rng(4).normal(size=(50, 3, 2))
    assert np.allclose(singular_values(A), np.linalg.svd(A, compute_uv=False), atol=1e-12)


@pytest.mark.parametrize(
    "rho,expected",
    [
        (SpectralRegularizer("nuclear"), 7.0),
        (SpectralRegularizer("frobenius"), 5.0),
        (SpectralRegularizer("spectral"), 4.0),
        (SpectralRegularizer("logsumexp"), math.log(math.exp(4) + math.exp(3))),
        (SpectralRegularizer("nuclear", weight=0.5), 3.5),
        (SpectralRegularizer("schatten", p=2.0), 5.0),
    ],
    ids=lambda x: str(x),
)
def test_value_examples(rho, expected):
    assert value(rho, D) == pytest.approx(expected, rel=1e-13)


def test_logsumexp_matches_dense_rotation():
    Q = ortho_group.rvs(2, random_state=1)
    R = ortho_group.rvs(2, random_state=2)
    rho = SpectralRegularizer("logsumexp")
    assert value(rho, Q @ D @ R) == pytest.approx(4.313261687518223, abs=1e-12)


def test_lpq_channels_inner():
    # columns are spatial; l^p over each column, then l^q across columns
    A = np.array([[3.0, 0.0], [4.0, 1.0]])
    rho = SpectralRegularizer("lpq", p=2.0, q=3.0)
    assert value(rho, A) == pytest.approx((5.0**3 + 1.0) ** (1 / 3))


def test_recession():
    A = np.random.default_rng(5).normal(size=(3, 2))
    fro = SpectralRegularizer("frobenius", weight=0.3)
    assert recession(fro, A) == value(fro, A)
    lse = SpectralRegularizer("logsumexp")
    assert recession(lse, D) == pytest.approx(4.0)
    s1 = singular_values(A)[0]
    for t in (10, 100, 1000):
        assert abs(value(lse, t * A) / t - s1) <= math.log(2) / t + 1e-12


@pytest.mark.parametrize("rho", SPECTRAL, ids=_ids(SPECTRAL))
def test_unitary_invariance(rho):
    rng = np.random.default_rng(6)
    for n, m in [(3, 2), (2, 2), (4, 3)]:
        A = rng.normal(size=(n, m))
        Q = ortho_group.rvs(n, random_state=rng)
        R = ortho_group.rvs(m, random_state=rng)
        assert value(rho, Q @ A @ R) == pytest.approx(value(rho, A), abs=1e-10)


@pytest.mark.parametrize("rho", NORMS, ids=_ids(NORMS))
def test_norm_axioms(rho):
    rng = np.random.default_rng(7)
    A = rng.normal(size=(500, 3, 2))
    B = rng.normal(size=(500, 3, 2))
    c = rng.normal(size=500)
    assert np.all(value(rho, A + B) <= value(rho, A) + value(rho, B) + 1e-12)
    assert np.allclose(value(rho, c[:, None, None] * A), np.abs(c) * value(rho, A), rtol=1e-12)
    assert np.all(value(rho, A) >= 0)


@pytest.mark.parametrize("rho", NORMS, ids=_ids(NORMS))
def test_duality_sampling(rho):
    rng = np.random.default_rng(8)
    A = rng.normal(size=(3, 2))
    # isotropic draws rarely come close to the maximiser in 6 dimensions, so
    # half the samples perturb a finite-difference gradient of rho at A
    E = np.eye(6).reshape(6, 3, 2)
    G = np.array([(value(rho, A + 1e-6 * e) - value(rho, A - 1e-6 * e)) / 2e-6 for e in E])
    B = rng.normal(size=(10000, 3, 2))
    s = np.logspace(-3, 1, 5000)[:, None, None]
    B[:5000] = G.reshape(3, 2) + s * B[:5000]
    # make every sample dual feasible, then push it to the boundary
    B = B / dual_value(rho, B)[:, None, None]
    assert np.all(dual_value(rho, B) <= 1 + 1e-12)
    inner = np.einsum("ij,kij->k", A, B)
    v = value(rho, A)
    assert np.all(inner <= v + 1e-10)
    assert inner.max() >= 0.98 * v


def test_dual_ball_examples():
    assert np.allclose(project_dual_ball(SpectralRegularizer("nuclear"), D), np.eye(2))
    assert np.allclose(project_dual_ball(SpectralRegularizer("spectral"), D), np.diag([0.0, 1.0]))
    P = 0.1 * np.ones((3, 2))
    for rho in NORMS:
        assert np.allclose(project_dual_ball(rho, P), P)
    with pytest.raises(ValueError, match="no dual-ball projection"):
        project_dual_ball(SpectralRegularizer("logsumexp"), D)


def _cvx_dual_ball(rho, P):
    X = cp.Variable(P.shape)
    fam = rho.family
    if fam == "frobenius":
        con = cp.norm(X, "fro") <= rho.weight
    elif fam == "nuclear":
        con = cp.sigma_max(X) <= rho.weight
    elif fam == "spectral":
        con = cp.normNuc(X) <= rho.weight
    elif fam == "lpq":
        a, b = rho.p / (rho.p - 1), rho.q / (rho.q - 1)
        cols = cp.hstack([cp.pnorm(X[:, j], a) for j in range(P.shape[1])])
        con = cp.pnorm(cols, b) <= rho.weight
    else:
        raise AssertionError
    cp.Problem(cp.Minimize(cp.sum_squares(X - P)), [con]).solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    return X.value


CVX = [NORMS[0], NORMS[1], NORMS[2], NORMS[5], SpectralRegularizer("nuclear", weight=0.7)]


@pytest.mark.parametrize("rho", CVX, ids=_ids(CVX))
def test_dual_ball_matches_cvxpy(rho):
    rng = np.random.default_rng(9)
    for _ in range(5):
        P = 2 * rng.normal(size=(3, 2))
        ours = project_dual_ball(rho, P)
        ref = _cvx_dual_ball(rho, P)
        assert np.allclose(ours, ref, atol=2e-5)


PROJ = NORMS + [SpectralRegularizer("schatten", p=1.2, weight=0.4)]


@pytest.mark.parametrize("rho", PROJ, ids=_ids(PROJ))
def test_dual_ball_variational_inequality(rho):
    rng = np.random.default_rng(10)
    P = 3 * rng.normal(size=(20, 3, 2))
    X = project_dual_ball(rho, P)
    assert np.all(dual_value(rho, X) <= rho.weight * (1 + 1e-9))
    Z = rng.normal(size=(20, 200, 3, 2))
    Z *= (rho.weight * rng.uniform(0, 1, (20, 200)) / dual_value(rho, Z))[..., None, None]
    vi = np.einsum("kij,ksij->ks", P - X, Z - X[:, None])
    assert vi.max() <= 1e-8


@pytest.mark.parametrize("rho", PROJ, ids=_ids(PROJ))
def test_dual_ball_nonexpansive_idempotent(rho):
    rng = np.random.default_rng(11)
    P = 2 * rng.normal(size=(200, 3, 2))
    Q = 2 * rng.normal(size=(200, 3, 2))
    XP = project_dual_ball(rho, P)
    XQ = project_dual_ball(rho, Q)
    d_in = np.linalg.norm((P - Q).reshape(200, -1), axis=1)
    d_out = np.linalg.norm((XP - XQ).reshape(200, -1), axis=1)
    assert np.all(d_out <= d_in + 1e-10)
    assert np.allclose(project_dual_ball(rho, XP), XP, atol=1e-10)


def test_simplex_ball_sort_threshold():
    assert np.allclose(project_simplex_ball(np.array([4.0, 3.0]), 1.0), [1.0, 0.0])
    assert np.allclose(project_simplex_ball(np.array([0.5, -0.4, 0.3]), 0.9), [0.4, -0.3, 0.2])
    y = np.array([0.2, -0.3])
    assert np.array_equal(project_simplex_ball(y, 1.0), y)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-10, 10)), st.floats(0.1, 5), st.floats(1.1, 6))
def test_lq_projection_kkt(y, r, q):
    x = project_lq_ball(y, r, q)
    nrm = np.sum(np.abs(x) ** q) ** (1 / q)
    assert nrm <= r * (1 + 1e-9)
    if np.sum(np.abs(y) ** q) ** (1 / q) > r:
        assert nrm == pytest.approx(r, rel=1e-8)
    # same sign, never amplified
    assert np.all(np.abs(x) <= np.abs(y) + 1e-12)
    assert np.all(x * y >= 0)


def test_symmetric_gauge():
    rng = np.random.default_rng(12)
    A = rng.normal(size=(3, 2))
    assert symmetric_gauge(np.sum, A) == pytest.approx(value(SpectralRegularizer("nuclear"), A))
    assert symmetric_gauge(np.max, A) == pytest.approx(value(SpectralRegularizer("spectral"), A))

    def h(A):
        return np.sum(singular_values(A) ** 1.5, axis=-1) ** (1 / 1.5)

    A = rng.normal(size=(10000, 3, 3))
    B = rng.normal(size=(10000, 3, 3))
    assert np.all(h((A + B) / 2) <= (h(A) + h(B)) / 2 + 1e-12)


def test_von_neumann_examples():
    assert von_neumann_gap(np.diag([2.0, 1.0]), np.diag([2.0, 1.0])) == pytest.approx(0, abs=1e-15)
    assert von_neumann_gap(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        von_neumann_gap(np.eye(2), np.eye(3))


def _quotient_gap(rho, A, B, tau):
    m = A.shape[1]
    return abs(
        (value(rho, A @ (np.eye(m) + tau * B)) - value(rho, A)) / tau
        + (value(rho, A @ (np.eye(m) - tau * B)) - value(rho, A)) / tau
    )


DIFF = [NORMS[0], NORMS[1], NORMS[3], NORMS[4], SpectralRegularizer("logsumexp")]


@pytest.mark.parametrize("rho", DIFF, ids=_ids(DIFF))
def test_inner_variation_quotient_is_linear_in_tau(rho):
    rng = np.random.default_rng(13)
    A = rng.normal(size=(3, 2))
    B = rng.normal(size=(2, 2))
    taus = np.array([1e-2, 1e-3, 1e-4])
    gaps = np.array([_quotient_gap(rho, A, B, t) for t in taus])
    slope = np.polyfit(np.log(taus), np.log(gaps), 1)[0]
    assert slope >= 0.9


def test_recession_quotient_rank_one():
    rng = np.random.default_rng(14)
    A = np.outer(rng.normal(size=3), rng.normal(size=2))
    B = rng.normal(size=(2, 2))
    spec = SpectralRegularizer("spectral")
    taus = np.array([1e-2, 1e-3, 1e-4])
    gaps = np.array([_quotient_gap(spec, A, B, t) for t in taus])
    assert np.all(gaps <= 10 * taus * np.linalg.norm(A) * np.linalg.norm(B) ** 2)
