import cvxpy as cp
import numpy as np
import pytest

from tvjump.fidelity import Fidelity
from tvjump.grid import GridSpec, MatrixField, VectorField
from tvjump.solver import (
    HuberNorm,
    PowerNorm,
    SolverConfig,
    discrete_gradient,
    divergence,
    energy,
    max_principle_check,
    rof_solve,
    taut_string_1d,
    tgv_energy,
    tgv_solve,
)
from tvjump.specnorm import SpectralRegularizer

L2 = Fidelity()
FRO = SpectralRegularizer("frobenius", 0.1)


def step1d(N=256, lo=0.0, hi=1.0):
    data = np.where(np.arange(N) < N // 2, lo, hi).astype(float)
    return VectorField.from_array(data, spacing=1.0 / N)


# -- operators -----------------------------------------------------------------


def test_gradient_examples():
    g = GridSpec((6, 5), 0.5)
    c = VectorField(g, np.full((6, 5, 2), 3.0))
    assert np.all(discrete_gradient(c).data == 0)
    ramp = VectorField.from_array(np.arange(10) * 0.1, spacing=0.1)
    d = discrete_gradient(ramp).data[:, 0, 0]
    assert np.allclose(d[:-1], 1.0) and d[-1] == 0.0


@pytest.mark.parametrize("dims", [(17,), (9, 7)])
def test_adjoint_identity(dims):
    rng = np.random.default_rng(0)
    g = GridSpec(dims, 0.3)
    w = VectorField(g, rng.normal(size=dims + (3,)))
    P = MatrixField(g, rng.normal(size=dims + (3, len(dims))))
    lhs = np.sum(discrete_gradient(w).data * P.data)
    rhs = -np.sum(w.data * divergence(P).data)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_divergence_spike_dipole():
    g = GridSpec((5, 5), 1.0)
    P = np.zeros((5, 5, 1, 2))
    assert np.all(divergence(MatrixField(g, P)).data == 0)
    P[2, 2, 0, 0] = 1.0
    d = divergence(MatrixField(g, P)).data[..., 0]
    expected = np.zeros((5, 5))
    expected[2, 2] = 1.0
    expected[3, 2] = -1.0
    assert np.array_equal(d, expected)


# -- energy ---------------------------------------------------------------------


def test_energy_examples():
    c = VectorField(GridSpec((8, 8), 0.1), np.full((8, 8, 1), 0.4))
    assert energy(c, c, FRO, L2) == 0.0
    f = step1d()
    assert energy(f, f, FRO, L2) == pytest.approx(0.1, abs=1 / 256)
    with pytest.raises(ValueError):
        energy(c, f, FRO, L2)
    assert energy(f, f, FRO, L2, box=(0.2, 0.8)) == np.inf


# -- configuration --------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(theta_relax=1.5)
    with pytest.raises(ValueError):
        SolverConfig(box=((1.0, 0.0),))
    with pytest.raises(ValueError):
        SolverConfig(sigma=1.0, tau_step=1.0).steps(10.0)
    s, t = SolverConfig(step_ratio=2.0).steps(4.0)
    assert s * t * 16 == pytest.approx(1.0)


# -- ROF ------------------------------------------------------------------------


def test_rof_constant():
    f = VectorField(GridSpec((12, 10), 0.1), np.broadcast_to([0.2, 0.7, 0.5], (12, 10, 3)))
    for fam in ("frobenius", "nuclear", "spectral"):
        u, rep = rof_solve(f, SpectralRegularizer(fam, 0.3), L2)
        assert np.allclose(u.data, f.data, atol=1e-12)
        assert rep.converged


def test_rof_step_continuum_values():
    f = step1d()
    u, rep = rof_solve(f, FRO, L2, SolverConfig(tol_gap=1e-10, max_iters=100000))
    assert rep.converged
    assert np.max(np.abs(u.data[:128] - 0.2)) <= 2e-2
    assert np.max(np.abs(u.data[128:] - 0.8)) <= 2e-2
    assert np.allclose(u.data, taut_string_1d(f, 0.1).data, atol=1e-4)


def test_rof_matches_taut_string_random():
    rng = np.random.default_rng(1)
    for alpha in (0.05, 0.3):
        f = VectorField.from_array(rng.uniform(0, 1, 64), spacing=1 / 64)
        u, _ = rof_solve(f, SpectralRegularizer("frobenius", alpha), L2, SolverConfig(tol_gap=1e-10, max_iters=200000))
        assert np.max(np.abs(u.data - taut_string_1d(f, alpha).data)) <= 1e-4


def test_rof_energy_optimality_and_report():
    rng = np.random.default_rng(2)
    f = VectorField(GridSpec((16, 16), 1 / 16), rng.uniform(0, 1, (16, 16, 3)))
    rho = SpectralRegularizer("nuclear", 0.05)
    u, rep = rof_solve(f, rho, L2, SolverConfig(tol_gap=1e-8))
    e = energy(u, f, rho, L2)
    assert rep.primal_energy == pytest.approx(e, rel=1e-8)
    assert e <= energy(f, f, rho, L2)
    for _ in range(100):
        w = u.with_data(u.data + rng.normal(scale=10 ** rng.uniform(-4, -1), size=u.data.shape))
        assert e <= energy(w, f, rho, L2) + 1e-9
    # gap trend over the run
    gaps = dict((it, g) for it, _, g in rep.history)
    for k in (10, 100):
        if 10 * k in gaps:
            assert gaps[10 * k] <= gaps[k]


def test_rof_box_exact():
    rng = np.random.default_rng(3)
    f = VectorField(GridSpec((10, 10), 0.1), rng.uniform(0, 1, (10, 10, 2)))
    box = ((0.3, 0.6), (0.1, 0.9))
    for phi in (L2, Fidelity.huber(0.1)):
        u, _ = rof_solve(f, SpectralRegularizer("frobenius", 0.01), phi, SolverConfig(box=box, tol_gap=1e-6))
        assert np.all(u.data[..., 0] >= 0.3) and np.all(u.data[..., 0] <= 0.6)
        assert np.all(u.data[..., 1] >= 0.1) and np.all(u.data[..., 1] <= 0.9)


def test_rof_errors_and_nonconvergence():
    f = step1d(32)
    with pytest.raises(ValueError, match="unsupported regularizer"):
        rof_solve(f, SpectralRegularizer("logsumexp"), L2)
    u, rep = rof_solve(f, FRO, L2, SolverConfig(max_iters=3, tol_gap=1e-14))
    assert not rep.converged and rep.iterations == 3
    assert "NOT converged" in rep.summary()


# -- taut string ------------------------------------------------------------------


def test_taut_string_examples():
    c = VectorField.from_array(np.full(20, 0.3), spacing=0.05)
    assert np.allclose(taut_string_1d(c, 1.0).data, 0.3)
    f = step1d(64)
    assert np.allclose(taut_string_1d(f, 0.26).data, 0.5)
    assert np.ptp(taut_string_1d(f, 0.24).data) > 0.01
    with pytest.raises(ValueError):
        taut_string_1d(VectorField(GridSpec((4, 4)), np.zeros((4, 4, 1))), 0.1)


def test_taut_string_cvxpy_oracle():
    rng = np.random.default_rng(4)
    y = rng.normal(size=50)
    lam = 0.7
    x = cp.Variable(50)
    cp.Problem(cp.Minimize(0.5 * cp.sum_squares(x - y) + lam * cp.norm1(cp.diff(x)))).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10
    )
    f = VectorField.from_array(y, spacing=1.0)
    assert np.allclose(taut_string_1d(f, lam).data[:, 0], x.value, atol=1e-6)


def test_taut_string_optimality_sampling():
    rng = np.random.default_rng(5)
    f = VectorField.from_array(rng.uniform(0, 1, 64), spacing=1 / 64)
    u = taut_string_1d(f, 0.05)
    e = energy(u, f, SpectralRegularizer("frobenius", 0.05), L2)
    for _ in range(1000):
        w = u.with_data(u.data + rng.normal(scale=10 ** rng.uniform(-5, -1), size=u.data.shape))
        assert e <= energy(w, f, SpectralRegularizer("frobenius", 0.05), L2) + 1e-13


# -- TGV ------------------------------------------------------------------------


def test_tgv_ramp_and_constant():
    x = GridSpec((16, 16), 1 / 16).node_positions()
    ramp = VectorField(GridSpec((16, 16), 1 / 16), (0.2 + 0.3 * x[..., 0] - 0.4 * x[..., 1])[..., None])
    cfg = SolverConfig(tol_gap=1e-8, max_iters=50000)
    u, z, rep = tgv_solve(ramp, SpectralRegularizer("frobenius"), HuberNorm(0.05), (0.1, 0.2), cfg=cfg)
    assert np.max(np.abs(u.data - ramp.data)) <= 1e-3
    assert tgv_energy(ramp, z, ramp, SpectralRegularizer("frobenius"), HuberNorm(0.05), (0.1, 0.2)) <= 1e-3
    c = ramp.with_data(np.full((16, 16, 1), 0.5))
    u, z, _ = tgv_solve(c, SpectralRegularizer("frobenius"), PowerNorm(2.0), (0.1, 0.2), symmetrized=False, cfg=cfg)
    assert np.allclose(u.data, 0.5, atol=1e-10) and np.allclose(z.data, 0.0, atol=1e-10)


def test_tgv_refusals():
    f = step1d(32)
    with pytest.raises(ValueError, match="exact TGV out of scope"):
        tgv_solve(f, FRO, PowerNorm(1.0))
    with pytest.raises(ValueError):
        tgv_solve(VectorField(GridSpec((8,)), np.zeros((8, 2))), FRO, HuberNorm(0.1))
    with pytest.raises(TypeError):
        tgv_solve(f, FRO, "huber")


def test_tgv_large_alpha2_step():
    # with Neumann boundaries a constant z has Ez = 0, so large alpha2 pins z
    # to a constant slope rather than to zero; for the unit step the optimum
    # over {a + s x + J H} is J = 0, i.e. the least-squares affine fit
    f = step1d(64)
    cfg = SolverConfig(tol_gap=1e-7, max_iters=100000)
    u, z, _ = tgv_solve(f, SpectralRegularizer("frobenius"), HuberNorm(0.01), (0.1, 100.0), cfg=cfg)
    x = f.spec.node_positions()[:, 0]
    fit = np.polyval(np.polyfit(x, f.data[:, 0], 1), x)
    assert np.max(np.abs(u.data[:, 0] - fit)) <= 5e-2
    assert np.ptp(z.data[:-1]) <= 5e-2


# -- maximum principle ------------------------------------------------------------


def test_max_principle_check_examples():
    rng = np.random.default_rng(6)
    f = VectorField(GridSpec((12, 12), 1 / 12), rng.uniform(0, 1, (12, 12, 3)))
    r = max_principle_check(f, f)
    assert r.ok and r.worst == 0.0
    shifted = f.with_data(f.data + 0.25)
    r = max_principle_check(shifted, f)
    assert not r.ok
    assert np.allclose(r.violation, f.data.max(axis=(0, 1)) + 0.25 - f.data.max(axis=(0, 1)))
    u, _ = rof_solve(f, SpectralRegularizer("frobenius", 0.05), L2, SolverConfig(tol_gap=1e-8))
    assert max_principle_check(u, f, 1e-6).ok
