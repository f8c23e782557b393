import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracschrod import doob as db
from fracschrod import spectral as sp
from fracschrod.domain import build_interval
from fracschrod.errors import AssemblyError, ConfigurationError, NumericalError
from fracschrod.operator import assemble


@pytest.fixture(scope="module")
def free_setup(form_a05, free_green_a05):
    led, doob, _ = db.build_ledger(form_a05, None, free_green=free_green_a05)
    return led, doob


@pytest.fixture(scope="module")
def hardy_setup(form_a05, hardy_half, free_green_a05):
    led, doob, _ = db.build_ledger(form_a05, hardy_half, free_green=free_green_a05)
    return led, doob


def test_exponents():
    r, q, s = db.exponents(3, 1.0)
    assert (r, q, s) == pytest.approx((1.5, 4.0 / 3.0, 6.0))
    with pytest.raises(ConfigurationError):
        db.exponents(1, 1.0)
    with pytest.raises(ConfigurationError):
        db.exponents(1, 1.0, r=1.0)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(1.001, 1e3))
def test_exponent_identity(r):
    _, q, s = db.exponents(1, 0.5, r=r)
    assert q > 1 and s > 2
    assert s == pytest.approx(2.0 / (q - 1.0), rel=1e-9)


def test_solve_w_torsion(form_a05):
    np.testing.assert_allclose(db.solve_w(form_a05, None, 0.0, 1.0), sp.torsion(form_a05), rtol=1e-10)


def test_solve_w_eigen_identity(form_a05):
    s = sp.eigensolve(form_a05, None, m=2)
    w = db.solve_w(form_a05, None, 0.0, s.ground_state)
    np.testing.assert_allclose(w, s.ground_state / s.lambda0, rtol=1e-9)


def test_solve_w_rejects(form_a05):
    lam = sp.eigensolve(form_a05, None, m=2).lambda0
    with pytest.raises(NumericalError) as exc:
        db.solve_w(form_a05, None, lam, 0.0)
    assert abs(exc.value.diagnostic["smallest_eigenvalue"]) < 1e-8
    with pytest.raises(NumericalError):
        db.solve_w(form_a05, None, 1.5 * lam, 1.0)
    with pytest.raises(ConfigurationError):
        db.solve_w(form_a05, None, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        db.solve_w(form_a05, None, -1.0, 1.0)


def test_doob_basic_identities(form_a05, free_setup, rng):
    _, doob = free_setup
    one = np.ones(form_a05.size)
    assert doob.energy(one) == pytest.approx(np.sum(form_a05.mass * doob.F * doob.w), rel=1e-10)
    assert doob.identity_error <= 1e-8
    P = rng.standard_normal((form_a05.size, 1000))
    assert np.all(doob.energy(P) >= 0)
    # Q^xi[f] = E[xi f] when S = 0
    g = doob.w[:, None] * P[:, :50]
    np.testing.assert_allclose(doob.energy(P[:, :50]), form_a05.energy(g), rtol=1e-9)


def test_doob_with_S(form_a05, hardy_half):
    lam = sp.eigensolve(form_a05, hardy_half, m=2).lambda0
    S = np.full(form_a05.size, 0.5 * lam)
    w = db.solve_w(form_a05, hardy_half, S, 0.3)
    doob = db.build_doob(form_a05, hardy_half, w, S, 0.3)
    assert doob.identity_error <= 1e-8
    assert db.conjugated_spectrum_error(doob) <= 1e-8


def test_doob_rejects_arbitrary_w(form_a05):
    with pytest.raises(AssemblyError):
        db.build_doob(form_a05, None, np.ones(form_a05.size), 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        db.build_doob(form_a05, None, -np.ones(form_a05.size), 0.0, 1.0)


def test_conjugated_spectrum(free_setup, hardy_setup):
    for _, doob in (free_setup, hardy_setup):
        assert db.conjugated_spectrum_error(doob) <= 1e-8


def test_ledger_fields(form_a05, free_setup, free_green_a05):
    led, doob = free_setup
    vals = [led.C_G, led.C_H, led.C0, led.Lambda1, led.Lambda2, led.C_S, led.A, led.C1]
    assert all(np.isfinite(v) and v > 0 for v in vals)
    phi = free_green_a05.ground_state
    assert led.C0 == pytest.approx(free_green_a05.C_G * np.sum(form_a05.mass * phi), rel=1e-12)
    assert led.Lambda1 == pytest.approx(1 + led.C_H * led.C0 / 2)
    assert led.Lambda2 == pytest.approx(0.5 + led.C_H * led.C0 * led.lambda0 / 2)
    assert (led.r, led.q, led.s) == pytest.approx((2.0, 1.5, 4.0))
    expect_A = (led.C0 * led.C_H + led.C_S) * (1 + led.lambda0 * led.C_S * 2.0 ** 0.5)
    assert led.A == pytest.approx(expect_A, rel=1e-12)
    d = led.to_dict()
    assert set(d) >= {"C_G", "C_H", "C0", "Lambda1", "Lambda2", "C_S", "r", "q", "s", "A", "C1"}


def test_ledger_alpha_at_least_dimension(form_a1):
    led, _, _ = db.build_ledger(form_a1, None, n_random=50)
    assert led.r == 2.0
    assert any("alpha >= d" in n for n in led.notes)


def test_t_optimization_closed_form(free_setup):
    led, _ = free_setup
    t, c = led.C_inf()
    lam = led.lambda0_V
    assert t == pytest.approx(led.s / (2 * lam), rel=1e-6)
    assert c == pytest.approx(led.C1 * (2 * lam * math.e / led.s) ** (led.s / 2), rel=1e-9)
    tm, M = led.M_inf()
    assert tm == pytest.approx(t, rel=1e-6)
    assert M == pytest.approx(led.A * led.C0 * led.C_H * c * c + 2 * lam, rel=1e-9)


def test_minimize_over_t_edge():
    # monotone objective: minimum sits at the grid end
    t, v = db.minimize_over_t(lambda t: -t, 1.0)
    assert t == pytest.approx(1e3)


def test_sobolev_scaling(small_a05):
    c = 3.0
    scaled = replace(small_a05, normalization=c * small_a05.normalization, killing=c * small_a05.killing)
    a = db.sobolev_constant(small_a05, None, 2.0, n_random=200)
    b = db.sobolev_constant(scaled, None, 2.0, n_random=200)
    assert b == pytest.approx(a / c, rel=1e-8)


def test_sobolev_refinement_stable():
    vals = [db.sobolev_constant(assemble(build_interval(-1.0, 1.0, n), 0.5), None, 2.0) for n in (200, 400)]
    assert abs(vals[1] / vals[0] - 1) <= 0.2


def test_sobolev_bumps_bounded(form_a05, free_setup):
    led, _ = free_setup
    f = form_a05
    bumps = f.mass ** (1 / led.r) / np.diag(f.matrix)
    assert bumps.max() < led.C_S / 1.5
    # the constant dominates every probe family it was fitted on
    s = sp.eigensolve(f)
    assert np.all(db.sobolev_ratio(f, None, led.r, s.eigenvectors) <= led.C_S / 1.5 * (1 + 1e-12))


def test_ultracontractivity_held_out(free_setup, hardy_setup):
    for led, doob in (free_setup, hardy_setup):
        lam = led.lambda0_V
        fresh = np.geomspace(0.03, 40.0, 10) / lam
        norms = db.ultracontractivity_norm(doob, fresh)
        bound = led.C1 * fresh ** (-led.s / 2) * np.exp(led.S_sup * fresh)
        assert np.all(norms <= bound * (1 + 1e-9))


def test_ultracontractivity_needs_times(free_setup):
    with pytest.raises(ConfigurationError):
        db.ultracontractivity_constant(free_setup[1], None, [])


def test_transformed_semigroup_sub_markov(free_setup):
    _, doob = free_setup
    mu, Y = doob.spectrum
    for t in (0.1, 1.0, 5.0):
        T1 = Y @ (np.exp(-mu * t) * (Y.T @ doob.mass))
        assert T1.max() <= 1 + 1e-9


@pytest.mark.parametrize("which", ["free", "hardy"])
def test_inequality_suite(which, free_setup, hardy_setup, form_a05, free_green_a05):
    led, doob = free_setup if which == "free" else hardy_setup
    phi = free_green_a05.ground_state
    P = db.doob_probes(doob, 1000, extra=[phi / doob.w])
    checks = [db.hardy_check(form_a05, phi, led.C_H, P), db.w_lower_bound_check(doob, led, phi),
              db.l2_estimate_check(doob, led, P), db.lambda_check(doob, led, P), db.is1_check(doob, led, P)]
    for c in checks:
        assert c.passed and c.violations == 0, c.to_dict()


def test_checks_trivial_probes(free_setup):
    led, doob = free_setup
    zero = np.zeros((doob.form.size, 1))
    for fn in (db.l2_estimate_check, db.lambda_check, db.is1_check):
        assert fn(doob, led, zero).max_violation == 0.0
    one = np.ones((doob.form.size, 1))
    c = db.l2_estimate_check(doob, led, one)
    lhs = np.sum(doob.form.mass)
    rhs = led.C0 * led.C_H * led.lambda0 * np.sum(doob.mass)
    assert c.max_violation == pytest.approx((lhs - rhs) / rhs, abs=1e-10)


def test_compare_free_alpha1():
    out = {}
    for n in (200, 400):
        f = assemble(build_interval(-1.0, 1.0, n), 1.0)
        s = sp.eigensolve(f, None, m=2)
        xi = sp.torsion(f)
        led, doob, _ = db.build_ledger(f, None, n_random=100)
        rep = db.compare(s, xi, led, doob)
        assert np.isfinite(rep.rho_plus) and np.isfinite(rep.rho_minus)
        c = f.grid.center_index()
        # xi(0) = 1 so the central ratio is phi0 there
        assert rep.ratio[c] == pytest.approx(s.ground_state[c], rel=1e-2)
        # the eigenfunction envelope is attained by the ratio itself
        assert rep.eigen_envelope == pytest.approx(rep.rho_plus, rel=1e-9)
        out[n] = (f.grid.x, rep.ratio)
    x2, r2 = out[200]
    x4, r4 = out[400]
    ri = np.interp(x2, x4, r4)
    inner = slice(2, -2)
    assert np.max(np.abs(ri[inner] / r2[inner] - 1)) <= 0.1


@pytest.mark.parametrize("which", ["free", "hardy"])
def test_compare_flags(which, form_a05, hardy_half, free_setup, hardy_setup):
    V = None if which == "free" else hardy_half
    led, doob = free_setup if which == "free" else hardy_setup
    rep = db.compare(sp.eigensolve(form_a05, V, m=2), sp.torsion(form_a05, V), led, doob)
    assert rep.upper_ok and rep.lower_ok
    assert rep.rho_plus <= rep.C_inf and 1 / rep.rho_minus <= rep.M_inf


def test_moser_ladder_properties(form_a05, free_setup):
    led, _ = free_setup
    s = sp.eigensolve(form_a05, None, m=2)
    rho = sp.torsion(form_a05) / s.ground_state
    th = db.moser_ladder(rho, s.ground_state, 4 / 3, 60, form_a05.mass)
    assert np.all(np.isfinite(th))
    assert np.all(np.diff(th) >= -1e-12 * th[:-1])
    assert th[-1] <= rho.max() * (1 + 1e-12)
    assert th[0] == pytest.approx(math.sqrt(np.sum(form_a05.mass * rho**2 * s.ground_state**2)))
    ok, factor = db.moser_step_check(th[:21], 4 / 3, led.M_inf()[1])
    assert ok.shape == (20,) and np.all(factor >= 1)


def test_moser_rejects():
    with pytest.raises(ConfigurationError):
        db.moser_ladder(np.array([1.0, 0.0]), np.ones(2), 1.5, 3, np.ones(2))
    with pytest.raises(ConfigurationError):
        db.moser_ladder(np.ones(2), np.ones(2), 1.0, 3, np.ones(2))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), q=st.floats(1.05, 3.0))
def test_moser_monotone_random(seed, q):
    g = np.random.default_rng(seed)
    rho = g.uniform(0.1, 50.0, 30)
    phi = g.uniform(0.1, 1.0, 30)
    m = np.full(30, 1.0)
    phi /= np.sqrt(np.sum(m * phi**2))
    th = db.moser_ladder(rho, phi, q, 25, m)
    assert np.all(np.diff(th) >= -1e-10 * th[:-1])
    assert th[-1] <= rho.max() * (1 + 1e-12)
