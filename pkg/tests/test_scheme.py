import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.sparse.linalg import spsolve

from nonlocal_fv.conv import KernelOperator
from nonlocal_fv.errors import InvalidArgument, InvariantViolation, SolverFailure
from nonlocal_fv.field import ExternalPotential, FieldSet, SpeciesState
from nonlocal_fv.grid import build_grid_1d, build_grid_2d
from nonlocal_fv.kernels import KernelSpec
from nonlocal_fv.scheme import (Model, PoissonRobin1D, RobinBC, StepConfig, conjugate_gradient, run_transient,
                                solve_poisson_robin_1d, step, step_1d, step_2d)


def _fields(state, f):
    f = np.asarray(f, dtype=float)
    z = np.zeros(state.grid.shape)
    return FieldSet(f, state.t, z, z, z)


def _hm(a, b):
    return 2 * a * b / (a + b)


def _dense_step_1d(c, f, grid, dt):
    """Backward Euler written out in the concentration variable."""
    n = grid.size
    out = []
    for cm, fm in zip(c, f):
        g = np.exp(-fm)
        A = np.diag(grid.volumes.copy())
        for j in range(n - 1):
            w = dt * _hm(g[j], g[j + 1]) / grid.dx
            # flux between j and j+1 acting on c/g
            A[j, j] += w / g[j]
            A[j, j + 1] -= w / g[j + 1]
            A[j + 1, j + 1] += w / g[j + 1]
            A[j + 1, j] -= w / g[j]
        out.append(np.linalg.solve(A, grid.volumes * cm))
    return np.array(out)


def test_step_1d_matches_dense_oracle():
    g = build_grid_1d(1.0, 10)
    rng = np.random.default_rng(0)
    s = SpeciesState(g, (1, -1), rng.random((2, g.size)))
    f = rng.normal(size=(2, g.size))
    got = step_1d(s, _fields(s, f), StepConfig(0.05))
    np.testing.assert_allclose(got.c, _dense_step_1d(s.c, f, g, 0.05), rtol=1e-12)
    assert got.t == pytest.approx(0.05)


def _sparse_step_2d(c, f, grid, dt):
    nx, ny = grid.shape
    idx = np.arange(grid.size).reshape(grid.shape)
    out = []
    for cm, fm in zip(c, f):
        g = np.exp(-fm)
        diag = grid.volumes.copy()
        A = sp.lil_matrix((grid.size, grid.size))
        for i in range(nx):
            for j in range(ny):
                for di, dj in ((1, 0), (0, 1)):
                    a, b = i + di, j + dj
                    if a >= nx or b >= ny:
                        continue
                    if di:
                        length = grid.dy * (0.5 if j in (0, ny - 1) else 1.0)
                        w = dt * _hm(g[i, j], g[a, b]) * length / grid.dx
                    else:
                        length = grid.dx * (0.5 if i in (0, nx - 1) else 1.0)
                        w = dt * _hm(g[i, j], g[a, b]) * length / grid.dy
                    p, q = idx[i, j], idx[a, b]
                    A[p, p] += w / g[i, j]
                    A[p, q] -= w / g[a, b]
                    A[q, q] += w / g[a, b]
                    A[q, p] -= w / g[i, j]
        A = A.tocsr() + sp.diags(diag.ravel())
        out.append(spsolve(A, (grid.volumes * cm).ravel()).reshape(grid.shape))
    return np.array(out)


def test_step_2d_matches_sparse_oracle():
    g = build_grid_2d(1.0, 0.5, 4, 3)
    rng = np.random.default_rng(1)
    s = SpeciesState(g, (1, 2), rng.random((2,) + g.shape))
    f = rng.normal(size=(2,) + g.shape)
    got, info = step_2d(s, _fields(s, f), StepConfig(0.02), return_info=True)
    np.testing.assert_allclose(got.c, _sparse_step_2d(s.c, f, g, 0.02), rtol=1e-10)
    assert info.iterations > 0 and info.residual <= 1e-13


@pytest.mark.parametrize("grid", [build_grid_1d(1.0, 12), build_grid_2d(1.0, 1.0, 5, 6)])
def test_equilibrium_is_fixed_point(grid):
    # c proportional to exp(-f) has zero flux, so one step returns it unchanged
    coords = (grid.x,) if grid.dim == 1 else grid.mesh()
    f = 3.0 * sum(x**2 for x in coords)[None]
    s = SpeciesState(grid, (0,), 0.7 * np.exp(-f))
    out = step(s, _fields(s, f), StepConfig(10.0))
    np.testing.assert_allclose(out.c, s.c, rtol=1e-11)


def test_huge_fields_do_not_overflow():
    g = build_grid_1d(1.0, 20)
    s = SpeciesState(g, (1,), np.ones((1, g.size)))
    f = 2000.0 * g.x[None] ** 2 + 5000.0  # exp(-f) underflows without the shift
    out = step_1d(s, _fields(s, f), StepConfig(1e-3))
    assert np.all(np.isfinite(out.c)) and np.all(out.c >= 0)
    assert out.masses()[0] == pytest.approx(s.masses()[0], rel=1e-12)


def test_stale_fields_rejected():
    g = build_grid_1d(1.0, 4)
    s = SpeciesState(g, (1,), np.ones((1, g.size)))
    fs = _fields(s, np.zeros((1, g.size)))
    with pytest.raises(InvariantViolation):
        step(s.replace(t=1.0), fs, StepConfig(0.1))


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(dt=-1.0), dict(dt=np.nan), dict(dt=0.1, tol=1e-3),
                                    dict(dt=0.1, max_iter=0), dict(dt=0.1, bc="periodic")])
def test_step_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        StepConfig(**kwargs)


def test_conjugate_gradient_against_numpy():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(30, 30))
    A = M @ M.T + 30 * np.eye(30)
    b = rng.normal(size=30)
    x, it, res = conjugate_gradient(lambda v: A @ v, b, np.diag(A).copy(), 1e-13, 200)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-11)
    assert res <= 1e-13
    with pytest.raises(SolverFailure) as err:
        conjugate_gradient(lambda v: A @ v, b, np.diag(A).copy(), 1e-13, 2)
    assert err.value.iterations == 2
    x0, it0, _ = conjugate_gradient(lambda v: A @ v, np.zeros(30), np.ones(30), 1e-13, 5)
    assert it0 == 0 and not x0.any()


def _random_case(draw_grid, seed, fscale, dt, zeros):
    rng = np.random.default_rng(seed)
    c = rng.random((2,) + draw_grid.shape) * rng.choice([1e-8, 1.0, 1e3])
    if zeros:
        c[rng.random(c.shape) < 0.3] = 0.0
    f = fscale * rng.normal(size=c.shape)
    return SpeciesState(draw_grid, (1, -1), c), f, dt


@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.floats(0.0, 50.0), st.floats(1e-6, 10.0), st.booleans())
def test_positivity_and_mass_1d(N, seed, fscale, dt, zeros):
    s, f, dt = _random_case(build_grid_1d(1.0, N), seed, fscale, dt, zeros)
    out = step_1d(s, _fields(s, f), StepConfig(dt))
    assert out.c.min() >= 0.0
    np.testing.assert_allclose(out.masses(), s.masses(), rtol=1e-11, atol=1e-300)


@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**32 - 1), st.floats(0.0, 20.0),
       st.floats(1e-5, 1.0), st.booleans())
def test_positivity_and_mass_2d(Nx, Ny, seed, fscale, dt, zeros):
    s, f, dt = _random_case(build_grid_2d(1.0, 1.0, Nx, Ny), seed, fscale, dt, zeros)
    out = step_2d(s, _fields(s, f), StepConfig(dt))
    assert out.c.min() >= -1e-13 * s.c.max()
    np.testing.assert_allclose(out.masses(), s.masses(), rtol=1e-11, atol=1e-300)


@given(st.integers(2, 40), st.integers(0, 2**32 - 1), st.floats(0.0, 10.0), st.floats(1e-4, 1.0))
def test_mirror_symmetry_1d(N, seed, fscale, dt):
    s, f, dt = _random_case(build_grid_1d(1.0, N), seed, fscale, dt, False)
    s = SpeciesState(s.grid, s.valences, s.c + s.c[:, ::-1])
    f = f + f[:, ::-1]
    out = step_1d(s, _fields(s, f), StepConfig(dt))
    np.testing.assert_allclose(out.c, out.c[:, ::-1], rtol=1e-11, atol=1e-14 * s.c.max())


@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.floats(0.0, 5.0), st.floats(1e-4, 1.0))
def test_mirror_symmetry_2d(N, seed, fscale, dt):
    s, f, dt = _random_case(build_grid_2d(1.0, 1.0, N, N), seed, fscale, dt, False)
    # symmetric under x -> -x and under swapping x and y
    def sym(a):
        a = a + a[:, ::-1] + a[:, :, ::-1] + a[:, ::-1, ::-1]
        return a + np.swapaxes(a, 1, 2)

    s = SpeciesState(s.grid, s.valences, sym(s.c))
    f = sym(f)
    out = step_2d(s, _fields(s, f), StepConfig(dt))
    tol = dict(rtol=1e-10, atol=1e-12 * s.c.max())
    np.testing.assert_allclose(out.c, out.c[:, ::-1], **tol)
    np.testing.assert_allclose(out.c, np.swapaxes(out.c, 1, 2), **tol)


def test_poisson_robin_exact_for_quadratics():
    # -phi'' = r gives phi = -r x^2/2 + A + B x; the discretisation is exact
    L, r, alpha, beta, gl, gr = 1.0, 3.0, 1.0, 0.01, -10.0, 10.0
    grid = build_grid_1d(L, 16)
    # alpha phi(-L) - beta phi'(-L) = gl ; alpha phi(L) + beta phi'(L) = gr
    M = np.array([[alpha, -alpha * L - beta], [alpha, alpha * L + beta]])
    rhs = np.array([gl + alpha * r * L**2 / 2 + beta * r * L, gr + alpha * r * L**2 / 2 + beta * r * L])
    A, B = np.linalg.solve(M, rhs)
    phi = solve_poisson_robin_1d(np.full(grid.shape, r), RobinBC(alpha, beta, gl, gr), grid)
    np.testing.assert_allclose(phi, -r * grid.x**2 / 2 + A + B * grid.x, rtol=1e-11, atol=1e-11)
    p = PoissonRobin1D(grid, RobinBC(alpha, beta, gl, gr))
    np.testing.assert_allclose(p(np.full(grid.shape, r)), phi, rtol=1e-13)
    with pytest.raises(InvalidArgument):
        PoissonRobin1D(grid, RobinBC(0.0, 1.0, 0.0, 0.0))


def _model_1d(grid, eta=1.0):
    return Model(KernelOperator(KernelSpec("exponential"), grid),
                 KernelOperator(KernelSpec("power_law", 0.5, eta=eta), grid),
                 ExternalPotential("quadratic", 10.0))


def _ic(grid):
    x = grid.x
    c = np.array([0.2 * np.exp(-20 * (x - 0.2) ** 2), 0.4 * np.exp(-20 * (x + 0.2) ** 2)])
    return SpeciesState(grid, (1, -1), c)


def test_run_transient_lands_on_t_end():
    g = build_grid_1d(1.0, 20)
    tr = run_transient(_ic(g), _model_1d(g), StepConfig(0.03), 0.1, diag_stride=2)
    assert tr.state.t == 0.1 and tr.steps == 4
    assert [r.t for r in tr.records] == pytest.approx([0.0, 0.06, 0.1])
    assert len(tr.snapshots) == 2 and tr.final_fields.t == 0.1
    empty = run_transient(_ic(g), _model_1d(g), StepConfig(0.03), 0.0)
    assert empty.records == [] and empty.steps == 0
    with pytest.raises(InvalidArgument):
        run_transient(_ic(g), _model_1d(g), StepConfig(0.03), -1.0)


def test_run_transient_observers_and_snapshots():
    g = build_grid_1d(1.0, 10)
    seen = []
    tr = run_transient(_ic(g), _model_1d(g), StepConfig(0.01), 0.1, observers=[lambda s, f, r: seen.append(r.t)],
                       snapshot_stride=3)
    assert seen == [r.t for r in tr.records] and len(seen) == 11
    assert [s.t for s in tr.snapshots] == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])


def test_blowup_guard_stops_run():
    g = build_grid_1d(1.0, 10)
    tr = run_transient(_ic(g), _model_1d(g, eta=0.0), StepConfig(0.01), 1.0, blowup_ceiling=0.3)
    assert tr.blowup and tr.state.t < 1.0
    assert tr.records[-1].t == tr.state.t


def test_energy_decays_over_run():
    g = build_grid_1d(1.0, 50)
    tr = run_transient(_ic(g), _model_1d(g), StepConfig(1e-3), 0.2)
    E = np.array([r.energy for r in tr.records])
    assert np.all(np.diff(E) <= 1e-12)
    assert all(r.dissipation >= 0 for r in tr.records)


def test_conjugate_gradient_mass_defect():
    # graph Laplacian plus a positive diagonal: column sums equal the diagonal part
    g = build_grid_2d(1.0, 1.0, 6, 6)
    rng = np.random.default_rng(3)
    s = SpeciesState(g, (0,), rng.random((1,) + g.shape))
    f = 8.0 * rng.normal(size=(1,) + g.shape)
    out = step_2d(s, _fields(s, f), StepConfig(50.0))
    assert out.masses()[0] == pytest.approx(s.masses()[0], rel=1e-13)
    # the reported residual is the true one, which sits at the rounding floor
    out, info = step_2d(s, _fields(s, f / 8.0), StepConfig(50.0), return_info=True)
    assert out.masses()[0] == pytest.approx(s.masses()[0], rel=1e-13)
    assert 0.0 < info.residual <= 1e-11
