import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracschrod.doob import sobolev_ratio
from fracschrod.domain import build_box, build_interval
from fracschrod.errors import AssemblyError, ConfigurationError
from fracschrod.operator import (_offset_weights_2d, apply_generator, assemble, export_form, exterior_integral,
                                 load_form_matrix, normalization_constant)
from fracschrod.spectral import eigensolve


def _A_oracle(d, a):
    # equivalent form 2^a Gamma((d+a)/2) / (pi^{d/2} |Gamma(-a/2)|)
    return float(2**mp.mpf(a) * mp.gamma((d + mp.mpf(a)) / 2) / (mp.pi ** (mp.mpf(d) / 2) * abs(mp.gamma(-mp.mpf(a) / 2))))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 1.5, 1.9])
def test_normalization_constant(d, a):
    assert normalization_constant(d, a) == pytest.approx(_A_oracle(d, a), rel=1e-12)


def test_normalization_known_value():
    assert normalization_constant(1, 1.0) == pytest.approx(1.0 / np.pi, rel=1e-14)


@pytest.mark.parametrize("bad", [(4, 1.0), (1, 0.0), (1, 2.0), (2, np.nan)])
def test_normalization_rejects(bad):
    with pytest.raises(ConfigurationError):
        normalization_constant(*bad)


def test_exterior_1d_closed_form():
    g = build_interval(-1.0, 2.0, 12)
    x = g.x
    a = 0.7
    ref = np.array([integrate.quad(lambda y: abs(xi - y) ** (-1 - a), 2.0, np.inf)[0]
                    + integrate.quad(lambda y: abs(xi - y) ** (-1 - a), -np.inf, -1.0)[0] for xi in x])
    np.testing.assert_allclose(exterior_integral(g, a), ref, rtol=1e-9)


@pytest.mark.parametrize("a", [0.5, 1.0, 1.5])
def test_exterior_2d_against_ray_quadrature(a):
    g = build_box((-1.0, -0.5), (1.0, 1.5), (5, 4))
    lo, hi = np.array(g.lo), np.array(g.hi)
    got = exterior_integral(g, a)
    for i in range(g.size):
        x = g.coords[i]

        def R(t):
            c, s = np.cos(t), np.sin(t)
            tx = ((hi[0] - x[0]) / c) if c > 0 else ((lo[0] - x[0]) / c if c < 0 else np.inf)
            ty = ((hi[1] - x[1]) / s) if s > 0 else ((lo[1] - x[1]) / s if s < 0 else np.inf)
            return min(tx, ty)

        corners = sorted(np.mod(np.arctan2(cy - x[1], cx - x[0]), 2 * np.pi) for cx in (lo[0], hi[0])
                         for cy in (lo[1], hi[1]))
        ref = integrate.quad(lambda t: R(t) ** (-a), 0.0, 2 * np.pi, points=corners, limit=200,
                             epsabs=0, epsrel=1e-12)[0] / a
        assert got[i] == pytest.approx(ref, rel=1e-9)


def test_weights_1d_point_to_cell():
    g = build_interval(0.0, 1.0, 10)
    a = 1.3
    f = assemble(g, a)
    h = g.spacing[0]
    for i, j in [(0, 2), (3, 7), (9, 0)]:
        ref = h * integrate.quad(lambda y: abs(g.x[i] - y) ** (-1 - a), j * h, (j + 1) * h)[0]
        assert f.weights[i, j] == pytest.approx(ref, rel=1e-10)


def test_weights_2d_point_to_cell():
    a = 0.8
    h = (0.25, 0.5)
    W = _offset_weights_2d((6, 4), h, a)
    for p, q in [(1, 0), (0, 1), (1, 1), (3, 2), (5, 0)]:
        ref = integrate.dblquad(lambda y, x: (x * x + y * y) ** (-(2 + a) / 2),
                                (p - 0.5) * h[0], (p + 0.5) * h[0], (q - 0.5) * h[1], (q + 0.5) * h[1],
                                epsabs=0, epsrel=1e-12)[0]
        assert W[p, q] == pytest.approx(ref, rel=1e-9)


def test_adjacent_quadrature_failure_is_reported():
    with pytest.raises(AssemblyError) as exc:
        _offset_weights_2d((4, 4), (0.5, 0.5), 1.0, rtol=1e-30, max_sub=4)
    assert exc.value.module == "operator"


@settings(max_examples=25, deadline=None)
@given(n=st.integers(4, 60), a=st.floats(0.05, 1.95))
def test_markov_structure(n, a):
    f = assemble(build_interval(-1.0, 1.0, n), a)
    assert f.is_markov()
    E = f.matrix
    np.testing.assert_array_equal(E, E.T)
    assert np.all(f.killing > 0)
    assert np.linalg.eigvalsh(E).min() > 0


def test_markov_structure_2d():
    f = assemble(build_box((-1.0, -1.0), (1.0, 0.5), (7, 5)), 1.2)
    assert f.is_markov()
    assert np.all(f.killing > 0)
    assert np.all(np.diag(f.generator) > 0)


@pytest.mark.parametrize("a", [0.4, 1.0, 1.7])
def test_dilation_scaling_1d(a):
    small = assemble(build_interval(-1.0, 1.0, 40), a)
    big = assemble(build_interval(-2.0, 2.0, 40), a)
    np.testing.assert_allclose(big.matrix, 2.0 ** (1 - a) * small.matrix, rtol=1e-10, atol=1e-14)


def test_dilation_scaling_2d():
    a = 0.9
    small = assemble(build_box((-1.0, -1.0), (1.0, 1.0), (6, 6)), a)
    big = assemble(build_box((-2.0, -2.0), (2.0, 2.0), (6, 6)), a)
    np.testing.assert_allclose(big.matrix, 2.0 ** (2 - a) * small.matrix, rtol=1e-9, atol=1e-14)


def test_square_symmetry_2d():
    f = assemble(build_box((-1.0, -1.0), (1.0, 1.0), (6, 6)), 1.0)
    # transpose of the node layout: (i, j) -> (j, i)
    perm = (f.grid.index[:, 1] * 6 + f.grid.index[:, 0]).astype(int)
    np.testing.assert_allclose(f.matrix[np.ix_(perm, perm)], f.matrix, rtol=1e-12, atol=1e-14)


def test_energy_identities(form_a1, rng):
    f = form_a1
    one = np.ones(f.size)
    assert f.energy(one) == pytest.approx(np.sum(f.killing), rel=1e-12)
    assert abs(f.interaction(one)) < 1e-10 * np.sum(f.killing)
    u, v = rng.standard_normal((2, f.size))
    # L0 is the generator of E in the m pairing
    assert np.sum(f.mass * v * apply_generator(f, u)) == pytest.approx(v @ f.matrix @ u, rel=1e-12)
    P = rng.standard_normal((f.size, 3))
    np.testing.assert_allclose(f.energy(P), np.einsum("ij,ij->j", P, f.matrix @ P), rtol=1e-12)
    V = np.abs(rng.standard_normal(f.size))
    assert f.energy(u, V) == pytest.approx(u @ f.matrix @ u - np.sum(f.mass * V * u * u), rel=1e-12)
    np.testing.assert_allclose(f.energy(P, V), [f.energy(P[:, k], V) for k in range(3)], rtol=1e-12)


def test_apply_generator_shape_check(form_a1):
    with pytest.raises(ConfigurationError):
        apply_generator(form_a1, np.ones(3))


def test_export_roundtrip(tmp_path):
    f = assemble(build_interval(-1.0, 1.0, 16), 0.6)
    p = tmp_path / "form.bin"
    export_form(f, p)
    d, a, E = load_form_matrix(p)
    assert (d, a) == (1, 0.6)
    np.testing.assert_array_equal(E, f.matrix)
    raw = p.read_bytes()
    assert raw[:8] == np.float64(1.0).tobytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(ConfigurationError):
        load_form_matrix(p)


def test_bad_alpha():
    with pytest.raises(ConfigurationError):
        assemble(build_interval(0.0, 1.0, 8), 2.5)


def test_normalization_plane_alpha_one():
    assert normalization_constant(2, 1.0) == pytest.approx(1.0 / (2.0 * np.pi), rel=1e-14)


def test_killing_density_at_center_converges():
    # exterior integral of |x - y|^{-2} over |y| > 1 at x = 0 is 2, times A(1, 1) = 1/pi
    errs = []
    for n in (100, 200, 400):
        f = assemble(build_interval(-1.0, 1.0, n), 1.0)
        c = int(np.argmin(np.abs(f.grid.coords[:, 0])))
        errs.append(abs(f.killing[c] / f.mass[c] - 2.0 / np.pi))
    assert errs[-1] < 1e-5
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(0.1, 1.9), scale=st.floats(0.1, 5.0))
def test_unit_contraction_lowers_energy(seed, a, scale):
    f = assemble(build_interval(-1.0, 1.0, 30), a)
    u = scale * np.random.default_rng(seed).standard_normal(f.size)
    assert f.energy(np.clip(u, 0.0, 1.0)) <= f.energy(u) * (1 + 1e-12)


def test_generator_of_torsion_profile():
    # (1 - x^2)^{1/2} is the torsion function of (-1, 1) for alpha = 1
    f = assemble(build_interval(-1.0, 1.0, 400), 1.0)
    x = f.grid.coords[:, 0]
    g = apply_generator(f, np.sqrt(1.0 - x**2))
    assert np.abs(g[f.grid.delta >= 0.2] - 1.0).max() <= 0.02
    np.testing.assert_array_equal(apply_generator(f, np.zeros(f.size)), 0.0)


@pytest.mark.parametrize("a", [0.3, 0.5])
def test_sobolev_ratio_refinement_stable(a):
    r = 1.0 / (1.0 - a)
    coarse = np.random.default_rng(1).standard_normal((40, 50))
    best = []
    for n in (200, 400):
        f = assemble(build_interval(-1.0, 1.0, n), a)
        x = f.grid.coords[:, 0]
        Y = eigensolve(f, None, m=f.size).eigenvectors
        # the same random profiles sampled on each grid
        R = np.column_stack([np.interp(x, np.linspace(-1, 1, 40), c) for c in coarse.T])
        best.append(max(sobolev_ratio(f, None, r, Y).max(), sobolev_ratio(f, None, r, R).max()))
    assert np.all(np.isfinite(best))
    assert abs(best[1] / best[0] - 1.0) <= 0.15
