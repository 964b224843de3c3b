import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_fv.diagnostics import (chemical_potential, discrete_dissipation, discrete_energy, error_norms,
                                     fit_order, make_record, restrict, total_mass)
from nonlocal_fv.errors import InvalidArgument, InvariantViolation
from nonlocal_fv.field import FieldSet, SpeciesState
from nonlocal_fv.grid import build_grid_1d, build_grid_2d
from nonlocal_fv.scheme import StepConfig, step


def _fields(state, phi_K=None, phi_W=None, ext=None, **kw):
    z = np.zeros(state.grid.shape)
    phi_K = z if phi_K is None else phi_K
    phi_W = z if phi_W is None else phi_W
    ext = z if ext is None else ext
    zz = np.asarray(state.z, dtype=float).reshape((-1,) + (1,) * state.grid.dim)
    f = zz * phi_K[None] + phi_W[None] + ext[None]
    return FieldSet(f, state.t, phi_K, phi_W, ext, **kw)


def test_energy_matches_hand_formula():
    g = build_grid_1d(1.0, 5)
    rng = np.random.default_rng(0)
    s = SpeciesState(g, (1, -1), rng.random((2, g.size)) + 0.1)
    pk, pw, v = rng.normal(size=(3, g.size))
    E = discrete_energy(s, _fields(s, pk, pw, v))
    expect = 0.0
    for m, z in enumerate((1, -1)):
        c = s.c[m]
        expect += np.sum(g.volumes * c * (np.log(c) + 0.5 * (z * pk + pw) + v))
    assert E == pytest.approx(expect, rel=1e-14)


def test_energy_zero_log_zero_and_negative():
    g = build_grid_1d(1.0, 3)
    s = SpeciesState(g, (0,), np.zeros((1, g.size)))
    assert discrete_energy(s, _fields(s)) == 0.0
    neg = SpeciesState(g, (0,), np.full((1, g.size), -1e-3))
    with pytest.raises(InvariantViolation):
        discrete_energy(neg, _fields(neg))


def test_boundary_part_counts_as_external():
    g = build_grid_1d(1.0, 4)
    s = SpeciesState(g, (2,), np.full((1, g.size), 0.5))
    bnd = np.linspace(-1, 1, g.size)
    fs = _fields(s, phi_K=bnd.copy(), phi_K_boundary=bnd)
    # the interaction part is zero, so the boundary field enters with weight one
    expect = np.sum(g.volumes * 0.5 * (np.log(0.5) + 2 * bnd))
    assert discrete_energy(s, fs) == pytest.approx(expect, rel=1e-14)


def test_dissipation_hand_formula_1d():
    g = build_grid_1d(1.0, 4)
    rng = np.random.default_rng(1)
    s = SpeciesState(g, (1,), rng.random((1, g.size)) + 0.2)
    v = rng.normal(size=g.size)
    fs = _fields(s, ext=v)
    u = s.c[0] * np.exp(v)
    gg = np.exp(-v)
    w = 2 * gg[:-1] * gg[1:] / (gg[:-1] + gg[1:]) / g.dx
    expect = np.sum(w * np.diff(np.log(u)) * np.diff(u))
    assert discrete_dissipation(s, fs) == pytest.approx(expect, rel=1e-13)


def test_dissipation_zero_at_equilibrium_and_inf_at_zero():
    g = build_grid_2d(1.0, 1.0, 4, 4)
    X, Y = g.mesh()
    v = X**2 + 2 * Y**2
    s = SpeciesState(g, (0,), 3.0 * np.exp(-v)[None])
    assert discrete_dissipation(s, _fields(s, ext=v)) == pytest.approx(0.0, abs=1e-14)
    mu = chemical_potential(s, _fields(s, ext=v))
    np.testing.assert_allclose(mu, 1 + np.log(3.0), rtol=1e-13)
    c = s.c.copy()
    c[0, 0, 0] = 0.0
    z = SpeciesState(g, (0,), c)
    assert discrete_dissipation(z, _fields(z, ext=v)) == np.inf


@given(st.integers(2, 20), st.integers(0, 2**32 - 1), st.floats(0.0, 40.0))
def test_dissipation_nonnegative(N, seed, scale):
    g = build_grid_1d(2.0, N)
    rng = np.random.default_rng(seed)
    s = SpeciesState(g, (1, -1), rng.random((2, g.size)) + 1e-6)
    assert discrete_dissipation(s, _fields(s, phi_K=scale * rng.normal(size=g.size))) >= 0.0


@given(st.integers(2, 25), st.integers(0, 2**32 - 1), st.floats(1e-4, 5.0))
def test_energy_dissipation_inequality_fixed_potential(N, seed, dt):
    # with a frozen external field one implicit step obeys E1 - E0 <= -dt D1
    g = build_grid_1d(1.0, N)
    rng = np.random.default_rng(seed)
    v = 5.0 * rng.normal(size=g.size)
    s0 = SpeciesState(g, (0,), rng.random((1, g.size)) + 1e-3)
    s1 = step(s0, _fields(s0, ext=v), StepConfig(dt))
    f1 = _fields(s1, ext=v)
    E0, E1 = discrete_energy(s0, _fields(s0, ext=v)), discrete_energy(s1, f1)
    assert E1 - E0 <= -dt * discrete_dissipation(s1, f1) + 1e-11 * (1 + abs(E0))


def test_total_mass():
    g = build_grid_1d(1.0, 4)
    s = SpeciesState(g, (1, 1), np.ones((2, g.size)))
    m, tot = total_mass(s)
    np.testing.assert_allclose(m, [2.0, 2.0])
    assert tot == pytest.approx(4.0)


@pytest.mark.parametrize("fine,coarse", [
    (build_grid_1d(3.0, 32), build_grid_1d(3.0, 8)),
    (build_grid_2d(1.0, 2.0, 16, 8), build_grid_2d(1.0, 2.0, 4, 2)),
])
def test_restriction_keeps_constants_and_mass(fine, coarse):
    s = SpeciesState(fine, (0,), np.full((1,) + fine.shape, 2.5))
    np.testing.assert_allclose(restrict(s, coarse), 2.5, rtol=1e-14)
    rng = np.random.default_rng(4)
    r = SpeciesState(fine, (0,), rng.random((1,) + fine.shape))
    rc = restrict(r, coarse)
    assert np.sum(rc * coarse.volumes) == pytest.approx(np.sum(r.c * fine.volumes), rel=1e-13)


def test_restriction_rejects_bad_nesting():
    s = SpeciesState(build_grid_1d(1.0, 12), (0,), np.ones((1, 25)))
    with pytest.raises(InvalidArgument, match="power of two"):
        restrict(s, build_grid_1d(1.0, 4))
    with pytest.raises(InvalidArgument, match="nest"):
        restrict(s, build_grid_1d(1.0, 5))
    with pytest.raises(InvalidArgument):
        restrict(s, build_grid_1d(2.0, 6))


def test_error_norms():
    g = build_grid_1d(1.0, 4)
    s = SpeciesState(g, (1,), np.random.default_rng(5).random((1, g.size)))
    assert error_norms(s, s) == (0.0, 0.0, 0.0)
    t = s.replace(c=s.c + 0.1)
    linf, l1, l2 = error_norms(t, s)
    assert linf == pytest.approx(0.1)
    assert l1 == pytest.approx(0.2)
    assert l2 == pytest.approx(0.1 * np.sqrt(2.0))


def test_fit_order():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_order(h, 3.0 * h**2) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(InvalidArgument):
        fit_order(h[:2], h[:2])
    with pytest.raises(InvalidArgument):
        fit_order(h, np.array([1.0, 0.0, 1.0, 1.0]))


def test_make_record():
    g = build_grid_1d(1.0, 4)
    s = SpeciesState(g, (1, -1), np.ones((2, g.size)) * [[1.0], [2.0]])
    r = make_record(s, _fields(s), clamped=1e-15, iterations=3)
    assert r.masses == pytest.approx((2.0, 4.0)) and r.linf == (1.0, 2.0)
    assert r.dissipation == 0.0 and r.iterations == 3
