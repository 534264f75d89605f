import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from positon_kdv import kdv, pde_oracle
from positon_kdv.hardy import check_symmetry
from positon_kdv.kdv import SolutionSingularity, SolverOptions
from positon_kdv.scattering import Params, approx_family, reflection, residue, solve_kappa, tau0

P1 = Params(1.0)


# -- Q


def test_Q_at_zero_and_half_pi():
    assert kdv.Q_closed(0.0, P1) == 0
    assert abs(kdv.Q_closed(np.pi / 2, P1) - 1.2104714) <= 1e-6


@given(st.floats(0.05, 10), st.floats(0.1, 20))
@settings(max_examples=30)
def test_Q_matches_numeric_log_derivative(rho, x):
    # -2 (log tau0)'' by a sixth-order central difference of the closed-form tau0
    p = Params(rho)
    d = 1e-3
    f = lambda s: np.log(tau0(s, p))
    w = np.array([2, -27, 270, -490, 270, -27, 2]) / 180
    fd = -2 * (w @ np.array([f(x + j * d) for j in range(-3, 4)])) / d**2
    assert abs(kdv.Q_closed(x, p) - fd) <= 1e-6 * (1 + abs(fd))


@given(st.floats(-50, 50))
def test_Q_is_even(x):
    assert kdv.Q_closed(x, P1) == kdv.Q_closed(-x, P1)


def test_Q_asymptotics():
    x = np.linspace(50, 200, 3001)
    C = np.max(x**2 * np.abs(kdv.Q_closed(x, P1) + 4 * np.sin(2 * x) / x))
    assert abs(kdv.Q_closed(80.0, P1) + 4 * np.sin(160) / 80) <= C / 80**2
    # the remainder really is O(1/x^2): the constant does not grow further out
    far = np.linspace(200, 2000, 20001)
    assert np.max(far**2 * np.abs(kdv.Q_closed(far, P1) + 4 * np.sin(2 * far) / far)) <= 1.2 * C


# -- symbols


def test_xi_trivial_values():
    k = np.array([0.3, -2.0, 1 + 1j])
    assert np.all(kdv.xi(k, 0.0, 0.0) == 1)
    sx = kdv.symbol_xt(P1, 0.7, 0.3)
    assert abs(kdv.xi(1j * sx.kappa, 0.7, 0.3) - np.exp(8 * 0.3 - 1.4)) <= 1e-12


@pytest.mark.parametrize("x,t", [(1.0, 0.0), (-3.0, 0.5), (0.2, 1.0)])
def test_symbol_residue_and_removability(x, t):
    sx = kdv.symbol_xt(P1, x, t)
    ik = 1j * sx.kappa
    Rxi = lambda k: reflection(k, P1) * kdv.xi(k, x, t)
    assert abs(residue(Rxi, ik) - 1j * sx.c * sx.xi_kappa) <= 1e-8 * sx.xi_kappa
    # phi(i kappa) is the mean of the naive formula over a circle around i kappa
    th = 2 * np.pi * np.arange(64) / 64
    ring = ik + 0.1 * np.exp(1j * th)
    naive = Rxi(ring) - 1j * sx.c * sx.xi_kappa / (ring - ik)
    assert abs(sx(ik) - naive.mean()) <= 1e-10 * (1 + abs(sx(ik)))
    # bounded near i kappa, varying no faster than the Cauchy estimate |phi'| <= M / r allows
    M = np.max(np.abs(sx(ring)))
    tiny = ik + 1e-6 * np.exp(1j * th)
    assert np.max(np.abs(sx(tiny) - sx(ik))) <= 2 * 1e-6 * M / 0.1


@pytest.mark.parametrize("x,t", [(-3.0, 0.5), (1.0, 0.0), (0.5, 0.25)])
def test_symbol_symmetry(x, t):
    assert check_symmetry(kdv.symbol_xt(P1, x, t)) <= 1e-10


def test_symbol_derivatives_by_finite_differences():
    sym = kdv.symbol_xt(P1, -1.0, 0.3).symbol()
    z = np.array([0.4 + 0.5j, -1.2 + 0.5j])
    d = 1e-4
    f = lambda x: kdv.symbol_xt(P1, x, 0.3).symbol().base(z)
    d1 = (f(-1 + d) - f(-1 - d)) / (2 * d)
    d2 = (f(-1 + d) - 2 * f(-1.0) + f(-1 - d)) / d**2
    assert np.max(np.abs(sym.base(z, 1) - d1)) <= 1e-6 * np.max(np.abs(d1))
    assert np.max(np.abs(sym.base(z, 2) - d2)) <= 1e-5 * np.max(np.abs(d2))


# -- u0, tau, u at t = 0


def test_u0_vanishes_at_t0():
    assert abs(kdv.u0(P1, 1.0, 0.0)) <= 1e-9
    assert abs(kdv.u0(P1, 0.0, 0.0)) <= 1e-9


def test_tau_closed_values():
    assert abs(kdv.tau_full(P1, 1.0, 0.0) - (2 - 0.5 * np.sin(2.0))) <= 1e-9
    assert abs(kdv.tau_full(P1, 1.0, 0.0) - 1.5453515) <= 1e-6
    assert abs(kdv.tau_full(P1, 0.0, 0.0) - 1) <= 1e-12


def test_u_reproduces_Q_right_and_left():
    assert abs(kdv.u_total(P1, 2.0, 0.0) - kdv.Q_closed(2.0, P1)) <= 1e-6
    for x in (0.5, 1.0, 2.0, 5.0):
        assert abs(kdv.u_total(P1, -x, 0.0) - kdv.u_total(P1, x, 0.0)) <= 5e-4


@pytest.mark.parametrize("rho", [0.5, 2.0])
def test_reconstruction_other_rho(rho):
    p = Params(rho)
    for x in (-3.0, -0.75, 1.5):
        assert abs(kdv.u_total(p, x, 0.0) - kdv.Q_closed(x, p)) <= 5e-4


def test_half_weight_breaks_left_reconstruction():
    # with rho/2 in front of the resolvent term tau no longer reproduces Q on x < 0
    half = SolverOptions(tau_weight="half")
    assert abs(kdv.u_total(P1, 2.0, 0.0, half) - kdv.Q_closed(2.0, P1)) <= 1e-6
    assert kdv.tau_full(P1, -2.0, 0.0, half) < 0
    with pytest.raises(SolutionSingularity):
        kdv.u_total(P1, -2.0, 0.0, half)


def test_norming_constant_shift_is_detected():
    o = SolverOptions(c_shift=1e-3)
    assert abs(kdv.u_total(P1, 2.0, 0.0, o) - kdv.Q_closed(2.0, P1)) >= 1e-5


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        kdv.u_total(P1, 0.0, -0.1)
    with pytest.raises(ValueError):
        kdv.make_plan(P1, -1.0, 0.5, SolverOptions(method="halfline"))


# -- t > 0


def test_trace_identity_vs_full_finite_difference():
    # u0 + u1 against -2 d^2/dx^2 log(det * tau), everything by FD on one plan
    x, t = -3.0, 0.5
    opts = SolverOptions()
    plan = kdv.make_plan(P1, x, t, opts)
    r = kdv.solve_point(P1, x, t, opts)

    def f(s):
        ev = kdv.evaluate(P1, s, t, plan, opts)
        return ev.logdet.real + np.log(ev.tau)

    full = -2 * kdv.second_derivative(f, x, 1e-2)
    assert abs(full - r.u) <= 1e-6
    assert r.u == r.u0 + r.u1


def test_field_grid_consistency():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fg = kdv.evaluate_field(P1, [-2.0, 0.5], [0.0, 0.3], threads=2)
    a = fg.array()
    assert a.shape == (4, 8)
    assert np.all(a[:, 2] == a[:, 3] + a[:, 4])
    assert [tuple(r[:2]) for r in a] == [(-2, 0), (0.5, 0), (-2, 0.3), (0.5, 0.3)]
    assert max(r.imag for r in fg.records) <= 1e-9
    assert np.all(fg.column("tau") > 0)


def test_pde_residual_near_origin():
    # fourth-order central differences on a patch around (0, 0.25)
    dx, dt, t0 = 0.05, 0.01, 0.25
    row = np.array([kdv.u_total(P1, dx * j, t0) for j in range(-3, 4)])
    col = np.array([kdv.u_total(P1, 0.0, t0 + dt * j) for j in (-2, -1, 1, 2)])
    d1 = np.array([1, -8, 8, -1]) / 12
    ut = d1 @ col / dt
    ux = d1 @ row[[1, 2, 4, 5]] / dx
    uxxx = np.array([1, -8, 13, 0, -13, 8, -1]) @ row / (8 * dx**3)
    assert abs(ut - 6 * row[3] * ux + uxxx) <= 1e-2


def test_u_against_oracle_at_half(q_oracle):
    g, ev = q_oracle
    x = np.array([0.5])
    u = [kdv.u_total(P1, 0.5, 0.25)]
    rep = pde_oracle.compare_window(x, u, ev.at(0.25), g, window=(0.4, 0.6))
    assert rep.max_err <= 5e-3


# -- short-range family


def test_Q_eps_even_and_converging():
    for eps in (0.5, 0.1):
        assert kdv.Q_eps(P1, eps, 1.3) == kdv.Q_eps(P1, eps, -1.3)
    errs = [abs(kdv.Q_eps(P1, eps, 1.0) - kdv.Q_closed(1.0, P1)) for eps in (0.4, 0.2, 0.1, 0.05)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-2


def test_Q_eps_rate_is_second_order():
    # measured behaviour: the error falls by ~4 per halving of eps
    e = [abs(kdv.Q_eps(P1, eps, 1.0) - kdv.Q_closed(1.0, P1)) for eps in (0.2, 0.1)]
    assert 3.5 <= e[0] / e[1] <= 4.5


@pytest.mark.xfail(strict=True, reason="Q_eps converges at second order (ratio ~4.0), "
                   "outside the first-order band")
def test_Q_eps_first_order_ratio_band():
    e = [abs(kdv.Q_eps(P1, eps, 1.0) - kdv.Q_closed(1.0, P1)) for eps in (0.2, 0.1)]
    assert 1.4 <= e[0] / e[1] <= 2.6


def test_Q_eps_analytic_matches_fd():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for x in (0.3, 1.0, 4.0):
            kdv.Q_eps(P1, 0.3, x, fd_check=True)


def test_u_eps_two_paths_at_t0():
    for x in (1.0, 2.5):
        assert abs(kdv.u_eps(P1, 0.5, x, 0.0) - kdv.Q_eps(P1, 0.5, x, fd_check=False)) <= 1e-8


def test_eps_symbol_symmetry():
    fam = approx_family(P1, 0.3)
    sym = kdv.symbol_eps(fam, 0.7, 0.2)
    assert check_symmetry(sym) <= 1e-10


def test_u_eps_approaches_u():
    u = kdv.u_total(P1, 1.0, 0.2)
    d = [abs(kdv.u_eps(P1, eps, 1.0, 0.2) - u) for eps in (0.1, 0.05)]
    assert d[0] <= 0.05 and d[1] < d[0]


# -- reference solutions


def test_soliton_and_positon_values():
    assert kdv.soliton(0.0, 0.0) == -2
    assert abs(kdv.positon(2.0, 0.0) - kdv.Q_closed(2.0, P1)) <= 1e-12
    x0 = kdv.positon_root(0.0)
    assert abs(x0 + 1.277) <= 1e-3 and -1.5 <= x0 <= -0.5
    with pytest.raises(SolutionSingularity) as e:
        kdv.positon(x0, 0.0)
    assert abs(e.value.location - x0) <= 1e-12


@given(st.floats(0, 1))
def test_positon_root_near_moving_centre(t):
    assert abs(kdv.positon_root(t) - (-12 * t - 1)) <= 0.5


@given(st.floats(-5, 5), st.floats(0, 1), st.floats(0.5, 1.5))
@settings(max_examples=40, deadline=None)
def test_hankel_soliton_family(x, t, kappa):
    exact = -2 * kappa**2 / np.cosh(kappa * (x - 4 * kappa**2 * t)) ** 2
    assert abs(kdv.hankel_soliton(x, t, kappa, 2 * kappa) - exact) <= 1e-8


def test_singularity_is_reported():
    # the rank-one determinant with c < 0 vanishes on a curve; tau-like zero
    with pytest.raises(ArithmeticError):
        kdv.hankel_soliton(0.0, 0.0, 1.0, -2.0)


# -- embedded state


def test_embedded_state():
    r = kdv.embedded_state_check(P1, 1.0)
    assert r["y0"] == 0
    assert r["bounded"] and r["growth_ratio"] < 1.5
    # the L^2 tail settles: the second half of [10, 200] holds a small share
    assert r["tail_l2_second_half"] <= 0.5 * r["tail_l2"]
    s = kdv.embedded_state_check(P1, 1.05)
    assert not s["bounded"] and s["growth_ratio"] >= 1.5


def test_kappa_used_in_symbol():
    sx = kdv.symbol_xt(Params(5.0), 0.0, 0.0)
    bs = solve_kappa(Params(5.0))
    assert sx.kappa == bs.kappa and sx.c == bs.c
