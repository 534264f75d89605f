import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from positon_kdv import hankel, kdv
from positon_kdv.hankel import (DiscretizedHankel, HalfLineHankel, IllConditionedError,
                                SingularDeterminantError, bent_grid, block_determinant_check,
                                sinh_grid, uniform_grid)
from positon_kdv.hardy import Blaschke, Kernel, Symbol, split_symbol
from positon_kdv.scattering import Params, approx_family, reflection_rational

P1 = Params(1.0)


def contour_operator(x, t, h=None, n=256, derivatives=True):
    """Operator for phi_{x,t} on a frozen grid (no doubling)."""
    sym = kdv.symbol_xt(P1, x, t).symbol()
    plan = kdv.plan_contour(sym, t, x, kdv.SolverOptions(h=h, nodes=n, n_max=n))
    return hankel.build(split_symbol(sym, plan.h), plan.grid, derivatives), sym, plan


def zero_symbol():
    return Symbol(base=lambda z, order=0: np.zeros(np.shape(z), complex))


# -- grids


def test_sinh_grid_invariants():
    g = sinh_grid(1.5, 128)
    assert np.all(g.nodes.imag == 1.5)
    assert np.all(g.weights > 0)
    assert np.allclose(g.nodes, -np.conj(g.nodes[::-1]), atol=1e-13)


def test_bent_grid_symmetry():
    g = bent_grid(0.25, 2.0, 8.0, 256)
    assert np.allclose(g.nodes, -np.conj(g.nodes[::-1]), atol=1e-13)
    assert np.allclose(g.weights, np.conj(g.weights[::-1]), atol=1e-15)
    assert np.min(g.nodes.imag) >= 0.25 - 1e-15
    # the flat part sits at h0 and the rays rise at slope 1/sqrt(3)
    r = g.nodes.real
    sp = lambda v: np.log1p(np.exp(v))
    expect = 0.25 + 0.5 / np.sqrt(3) * (sp((r - 2.0) / 0.5) + sp((-r - 2.0) / 0.5))
    assert np.allclose(g.nodes.imag, expect, atol=1e-14)
    far = g.nodes.real > 6
    assert np.allclose(np.diff(g.nodes[far].imag) / np.diff(g.nodes[far].real),
                       1 / np.sqrt(3), atol=1e-3)
    assert g.refined().count == 512 and g.refined().kind == "bent"


# -- build and logdet


def test_zero_symbol_gives_zero_kernel():
    split = split_symbol(zero_symbol(), 1.0)
    H = hankel.build(split, sinh_grid(1.0, 64))
    assert np.all(H.c == 0)
    assert H.logdet().value == 0
    assert H.logdet_dx2() == 0
    empty = hankel.build(split, None)
    assert empty.size == 0 and empty.logdet().value == 0


def test_vanishing_at_t0_x1_h2():
    H, _, _ = contour_operator(1.0, 0.0, h=2.0)
    assert abs(H.logdet().value) <= 1e-6


def test_build_rejects_bad_input():
    sym = kdv.symbol_xt(P1, -1.0, 0.5).symbol()
    with pytest.raises(ValueError):
        hankel.build(split_symbol(sym, 0.5), uniform_grid(0.75, 10.0, 32))
    bad = Symbol(base=lambda z, order=0: np.full(np.shape(z), np.nan, complex))
    with pytest.raises(ValueError):
        hankel.build(split_symbol(bad, 1.0, check=False), uniform_grid(1.0, 5.0, 16))


@given(st.floats(-3, 3), st.floats(0, 0.5), st.floats(0.3, 2.0), st.floats(0.1, 4.0))
@settings(max_examples=40, deadline=None)
def test_rank_one_closed_form(x, t, kappa, c):
    H = hankel.build(split_symbol(kdv.soliton_symbol(x, t, kappa, c), 1.0), None)
    arg = -2 * kappa * x + 8 * kappa**3 * t
    exact = np.log1p(c / (2 * kappa) * np.exp(arg))
    assert abs(H.logdet().value - exact) <= 1e-9 * max(1.0, abs(exact))


def test_rank_one_det_equals_two_at_origin():
    H = hankel.build(split_symbol(kdv.soliton_symbol(0.0, 0.0, 1.0, 2.0), 1.0), None)
    assert abs(H.logdet().value - np.log(2)) <= 1e-15


def test_rank_one_contour_path_matches_closed_form():
    # r/(z - i kappa) times g^4, g = i(kappa + a)/(z + i a): g - 1 vanishes at
    # i kappa and g is analytic in C+, so the Hankel operator is still the
    # rank-one one, but the contour now sees a symbol decaying like 1/s^5
    kappa, c, x, a = 1.0, 2.0, 0.4, 1.0
    r = -1j * c * np.exp(-2 * kappa * x)

    def base(z, order=0):
        z = np.asarray(z, complex)
        return r / (z - 1j * kappa) * (1j * (kappa + a) / (z + 1j * a)) ** 4

    sym = Symbol(base=base, base_poles=((1j * kappa, (r, 0, 0)),))
    H = hankel.build(split_symbol(sym, 0.5), sinh_grid(0.5, 256, f=base), derivatives=False)
    assert abs(H.logdet().value - np.log1p(c / (2 * kappa) * np.exp(-2 * kappa * x))) <= 1e-9


def test_soliton_second_log_derivative_at_zero():
    H = hankel.build(split_symbol(kdv.soliton_symbol(0.0, 0.0, 1.0, 2.0), 1.0), None)
    assert abs(H.logdet_dx2() - 1) <= 1e-14


def test_singular_determinant_is_reported():
    # c = -2 kappa puts det = 1 + (c / 2 kappa) at zero for x = t = 0
    H = hankel.build(split_symbol(kdv.soliton_symbol(0.0, 0.0, 1.0, -2.0), 1.0), None)
    with pytest.raises(SingularDeterminantError):
        H.logdet()


@pytest.mark.parametrize("x,t", [(-3.0, 0.5), (-10.0, 1.0), (4.0, 0.25), (0.0, 0.75)])
def test_realness(x, t):
    H, _, _ = contour_operator(x, t, n=512)
    assert abs(H.logdet().value.imag) <= 1e-9
    assert abs(H.logdet_dx2().imag) <= 1e-9


ACCEPT_POINTS = [(-15.0, 1.0), (-15.0, 0.25), (-8.0, 0.5), (-3.0, 0.5), (0.0, 0.1),
                 (3.0, 0.75), (15.0, 1.0), (15.0, 0.05)]


@pytest.mark.parametrize("x,t", ACCEPT_POINTS)
def test_node_doubling_contour(x, t):
    H, sym, plan = contour_operator(x, t, derivatives=False)
    H2 = hankel.build(split_symbol(sym, plan.h), plan.grid.refined(), False)
    assert abs(H2.logdet().value - H.logdet().value) <= 1e-7


@pytest.mark.parametrize("x", [-0.5, -4.0, -8.0, -15.0])
def test_node_doubling_halfline(x):
    plan = kdv.make_plan(P1, x, 0.0, kdv.SolverOptions())
    R = reflection_rational(P1)
    res = [R.residue(p) for p in R.poles]
    # est_error of the doubled operator is |logdet(2N) - logdet(N)|
    ld = HalfLineHankel(R.poles, res, x, 2 * plan.nodes).logdet()
    assert ld.est_error <= 1e-7


def test_height_independence_of_logdet():
    vals = [contour_operator(-3.0, 0.5, h=h, n=512, derivatives=False)[0].logdet().value
            for h in (0.25, 0.5, 0.75)]
    bent = contour_operator(-3.0, 0.5, n=512, derivatives=False)[0].logdet().value
    assert max(abs(v - bent) for v in vals) <= 1e-7


def test_converge_reports_measured_error():
    sym = kdv.symbol_xt(P1, -3.0, 0.5).symbol()
    plan = kdv.plan_contour(sym, 0.5, -3.0, kdv.SolverOptions(nodes=128, n_max=128))
    H, ld = hankel.converge(split_symbol(sym, plan.h), plan.grid, tol=1e-8)
    assert np.isfinite(ld.est_error) and ld.est_error <= 1e-8
    assert ld.node_count == H.grid.count


def test_trace_identity_against_finite_differences():
    x, t, d = -3.0, 0.5, 1e-2
    H, sym, plan = contour_operator(x, t, n=512)

    def ld(s):
        sp = split_symbol(kdv.symbol_xt(P1, s, t).symbol(), plan.h)
        return hankel.build(sp, plan.grid, False).logdet().real

    fd = np.array([-1, 16, -30, 16, -1]) @ np.array([ld(x + j * d) for j in range(-2, 3)])
    fd /= 12 * d * d
    assert abs(H.logdet_dx2().real - fd) <= 1e-6


# -- resolvent


def test_resolvent_round_trip():
    H, _, _ = contour_operator(-3.0, 0.5, n=512, derivatives=False)
    g = Kernel(0.3 + 0.8j)
    v = lambda s: H.resolvent_apply(g, np.asarray(s, complex))
    Hv = H.apply(v)
    probes = np.array([-2.0, -0.7, 0.0, 0.5, 1.0, 3.0, 0.2 + 0.3j, -1 + 1j, 2 + 0.1j, 4j])
    assert np.max(np.abs(v(probes) + Hv(probes) - g(probes))) <= 1e-8


def test_resolvent_identity_for_zero_symbol():
    H = hankel.build(split_symbol(zero_symbol(), 1.0), sinh_grid(1.0, 32))
    g = Kernel(1j)
    p = np.array([0.5, 2.0 + 1j])
    assert np.max(np.abs(H.resolvent_apply(g, p) - g(p))) == 0


@given(st.floats(0.2, 3.0), st.floats(-5, 5))
def test_sherman_morrison_rank_one(beta, gamma):
    # symbol i gamma / (k - i beta): H f = -gamma f(i beta) e with e(s) = 1/(s + i beta),
    # so e is an eigenvector with eigenvalue -gamma / (2 beta) ... up to the factor i
    if abs(1 - gamma / (2 * beta)) < 1e-3:
        return
    p = 1j * beta
    H = hankel.build(split_symbol(Symbol(terms=((p, (1j * gamma, 0, 0)),)), 4.0), None, False)
    e = lambda s: 1 / (np.asarray(s, complex) + p)
    s = np.array([0.3, -1.2 + 0.4j])
    expect = e(s) / (1 - gamma / (2 * beta))
    assert np.max(np.abs(H.resolvent_apply(e, s) - expect)) <= 1e-10 * np.max(np.abs(expect))


def test_resolvent_smooth_matches_generic_resolvent():
    H, _, _ = contour_operator(-2.0, 0.3, h=0.5, n=512, derivatives=False)
    K1 = H.smooth_element(1.0)
    Km = H.smooth_element(-1.0)
    g = lambda s: K1(s) - 0.4 * Km(s)
    a = H.resolvent_apply(g, np.array([1.0]))[0]
    b = H.resolvent_smooth([(1.0, 1.0), (-1.0, -0.4)], np.array([1.0]))[0]
    assert abs(a - b) <= 1e-10 * (1 + abs(a))


# -- smooth elements


def test_smooth_elements_vanish_at_t0_x1():
    H, _, _ = contour_operator(1.0, 0.0, h=2.0)
    s = np.array([-2.0, -0.5, 0.0, 1.0, 3.0])
    for m in (1.0, -1.0):
        assert np.max(np.abs(H.smooth_element(m)(s))) <= 1e-8


def K1_at_one(h, x=-2.0, t=0.3, n=512):
    H, _, _ = contour_operator(x, t, h=h, n=n, derivatives=False)
    return complex(H.smooth_element(1.0)(np.array([1.0]))[0])


def test_smooth_element_height_independence_low():
    assert abs(K1_at_one(0.5) - K1_at_one(1.5)) <= 1e-8
    assert abs(K1_at_one(0.25) - K1_at_one(0.5)) <= 1e-8


@pytest.mark.xfail(strict=True, reason="on Im z = 2.5 the symbol reaches ~e^47 at x=-2, t=0.3; "
                   "double precision cannot resolve the O(1) cancellation")
def test_smooth_element_height_independence_high():
    assert abs(K1_at_one(1.5) - K1_at_one(2.5)) <= 1e-8


def test_smooth_element_against_direct_quadrature():
    # K_m(s) = -int phi(z) / ((z - m)(z + s)) dz / 2pi on R + ih.  phi = R xi minus
    # a 1/(k - i kappa) term; the Gaussian part is summed by a fine trapezoid on
    # the line, the slowly decaying rational part by adaptive quadrature
    x, t, h, m = -2.0, 0.3, 0.5, 1.0
    H, _, _ = contour_operator(x, t, h=h, n=512, derivatives=False)
    sx = kdv.symbol_xt(P1, x, t)
    a = -1j * sx.c * sx.xi_kappa  # phi - R xi = a / (k - i kappa)
    r = np.linspace(-12, 12, 24001)
    z = r + 1j * h
    for s in (-1.5, 0.0, 1.0, 2.5 + 0.2j, -0.4 + 1j):
        smooth = -(sx.base(z) / ((z - m) * (z + s))).sum() * (r[1] - r[0]) / (2 * np.pi)
        f = lambda v: complex(-a / ((v + 1j * h - 1j * sx.kappa) * (v + 1j * h - m)
                                    * (v + 1j * h + s)) / (2 * np.pi))
        rat = (quad(lambda v: f(v).real, -np.inf, np.inf, epsabs=1e-13, limit=400)[0]
               + 1j * quad(lambda v: f(v).imag, -np.inf, np.inf, epsabs=1e-13, limit=400)[0])
        got = complex(H.smooth_element(m)(np.array([s]))[0])
        assert abs(got - (smooth + rat)) <= 1e-8 * (1 + abs(got))


def test_high_contour_is_flagged_ill_conditioned():
    with pytest.raises(IllConditionedError):
        contour_operator(-2.0, 0.3, h=3.0, n=512, derivatives=False)[0].logdet()


# -- half-line realization


def dense_halfline_logdet(x, n):
    """Midpoint-rule det(I + K) with K(g, a) = sum over poles of -i r e^{ip(g+a-L)} on g+a < L."""
    R = reflection_rational(P1)
    L = -2 * x
    g = (np.arange(n) + 0.5) * L / n
    S = g[:, None] + g[None, :]
    K = np.zeros((n, n), complex)
    for p in R.poles:
        K += -1j * R.residue(p) * np.exp(1j * p * (S - L))
    K = np.where(S < L, K, 0) * (L / n)
    sign, lab = np.linalg.slogdet(np.eye(n) + K)
    return lab + np.log(sign)


@pytest.mark.parametrize("x", [-0.5, -2.0, -4.0])
def test_halfline_against_dense_oracle(x):
    b, c = dense_halfline_logdet(x, 1000), dense_halfline_logdet(x, 2000)
    oracle = (4 * c - b) / 3
    R = reflection_rational(P1)
    ld = HalfLineHankel(R.poles, [R.residue(p) for p in R.poles], x, 512).logdet(False)
    assert abs(ld.value - oracle) <= 1e-6


def test_halfline_vanishes_for_nonnegative_x():
    R = reflection_rational(P1)
    op = HalfLineHankel(R.poles, [R.residue(p) for p in R.poles], 0.5)
    assert op.logdet().value == 0
    assert op.resolvent_smooth([(1.0, 1.0)]) == 0


@pytest.mark.filterwarnings("ignore:contour not converged")
@pytest.mark.parametrize("x", [-0.5, -2.0])
def test_halfline_tau_continues_contour_tau(x):
    # the contour realization needs t > 0; its tau extrapolated linearly from
    # t = 1e-4, 2e-4 must meet the half-line value at t = 0.  At these small t
    # the contour stops short of tol (~6e-7 at x=-2), well inside the 1e-5 check.
    a = kdv.tau_full(P1, x, 0.0)
    b1, b2 = (kdv.tau_full(P1, x, t) for t in (1e-4, 2e-4))
    assert abs(a - (2 * b1 - b2)) <= 1e-5


# -- block determinant diagnostic


def test_block_determinant_identity_eps():
    fam = approx_family(P1, 0.5)
    x, t = 1.0, 0.1
    sym = kdv.symbol_eps(fam, x, t)
    h = max(q.imag for q, _ in sym.base_poles) + 0.5
    grid = kdv._contour_grid(sym, h, t, 512)
    rep = block_determinant_check(split_symbol(sym, h), grid, Blaschke(fam.z))
    assert rep["ok"] and rep["diff"] <= 1e-6


def test_block_determinant_pure_rank_case():
    fam = approx_family(P1, 0.5)
    sym = kdv.symbol_eps(fam, 1.0, 0.0)
    h = max(q.imag for q, _ in sym.base_poles) + 0.5
    grid = kdv._contour_grid(sym, h, 0.0, 256)
    rep = block_determinant_check(split_symbol(sym, h), grid, Blaschke(fam.z), tol=1e-10)
    assert rep["diff"] <= 1e-10


def test_block_determinant_zero_symbol():
    split = split_symbol(zero_symbol(), 1.0)
    rep = block_determinant_check(split, sinh_grid(1.0, 32), Blaschke((0.5j,)))
    assert rep["lhs"] == 0 and abs(rep["rhs"]) <= 1e-15


def test_block_determinant_rejects_foreign_poles():
    fam = approx_family(P1, 0.5)
    sym = kdv.symbol_eps(fam, 1.0, 0.0)
    h = max(q.imag for q, _ in sym.base_poles) + 0.5
    with pytest.raises(ValueError):
        block_determinant_check(split_symbol(sym, h), sinh_grid(h, 64), Blaschke((0.3j, 2j)))


def test_equilibration_keeps_large_pole_columns():
    # a huge rank-one residue still gives the closed-form determinant
    H = DiscretizedHankel([2j], [-1e14])
    exact = np.log(1 + 1e14 / 4 * 1j)
    assert abs(H.logdet().value - exact) <= 1e-12 * abs(exact)
