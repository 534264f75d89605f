"""Verification suites run by ``positon-kdv verify``.

Every check returns a ``Check``; a suite is an ordered list of check
functions taking a ``Context``.  Checks compare against closed forms or
independent numerics, never against stored outputs of this package.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import hankel, kdv, pde_oracle
from .hardy import (Blaschke, Kernel, biorth_basis, check_symmetry, hankel_apply_rational,
                    inner_biorth, rank_one_hankel, split_symbol)
from .scattering import (Params, approx_family, jost, m_of_k, reflection, reflection_eps,
                         residue, solve_kappa, transmission, transmission_eps)


@dataclass
class Check:
    test: str
    measured: float
    tolerance: float
    status: str = ""
    seconds: float = 0.0
    mode: str = "max"  # "max": pass iff measured <= tolerance; "min": measured >= tolerance

    def __post_init__(self):
        if not self.status:
            ok = self.measured <= self.tolerance if self.mode == "max" else self.measured >= self.tolerance
            self.status = "pass" if bool(ok) and np.isfinite(self.measured) else "fail"

    def as_dict(self) -> dict:
        return {"test": self.test, "status": self.status, "measured": float(self.measured),
                "tolerance": float(self.tolerance), "seconds": round(self.seconds, 3)}


@dataclass(frozen=True)
class Context:
    rho: float = 1.0
    c_shift: float = 0.0

    @property
    def params(self) -> Params:
        return Params(self.rho)

    @property
    def opts(self) -> kdv.SolverOptions:
        return kdv.SolverOptions(c_shift=self.c_shift)


# ---------------------------------------------------------------------------
# scattering


def chk_constants(ctx):
    out = []
    for rho, kap, c in ((1.0, 1.0, 0.5), (5.0, 2.0, 10 / 13)):
        bs = solve_kappa(Params(rho))
        out.append(Check(f"kappa_c_rho{rho:g}", max(abs(bs.kappa - kap), abs(bs.c - c)), 1e-12))
    return out


def chk_unitarity(ctx):
    k = np.linspace(-10, 10, 2001)
    out = [Check("unitarity", float(np.max(np.abs(
        np.abs(transmission(k, Params(1.0))) ** 2 + np.abs(reflection(k, Params(1.0))) ** 2 - 1))), 1e-12)]
    for eps in (0.1, 0.5):
        fam = approx_family(Params(1.0), eps)
        d = np.abs(transmission_eps(k, fam)) ** 2 + np.abs(reflection_eps(k, fam)) ** 2 - 1
        out.append(Check(f"unitarity_eps{eps:g}", float(np.max(np.abs(d))), 1e-12))
    return out


def chk_residues(ctx):
    p = Params(1.0)
    bs = solve_kappa(p)
    num = residue(lambda k: transmission(k, p), 1j * bs.kappa)
    out = [Check("residue_T_ikappa", abs(num - 1j * bs.c), 1e-8)]
    for eps in (0.1, 0.5):
        fam = approx_family(p, eps)
        d = max(abs(fam.R.residue(1j * fam.kappa_plus) - fam.T.residue(1j * fam.kappa_plus)),
                abs(fam.R.residue(1j * fam.kappa_minus) + fam.T.residue(1j * fam.kappa_minus)))
        out.append(Check(f"residue_pm_eps{eps:g}", d, 1e-10))
    return out


def chk_m_function(ctx):
    p = Params(1.0)
    k = np.linspace(-10, 10, 2001)
    k = k[np.abs(np.abs(k) - 1) > 1e-6]
    m = m_of_k(k, p)
    d1 = np.max(np.abs(transmission(k, p) - 1j * k / m))
    d2 = np.max(np.abs(reflection(k, p) + (np.conj(m) + m) / (2 * m)))
    return [Check("m_function", float(max(d1, d2)), 1e-12)]


def chk_jost(ctx):
    p = Params(1.0)
    worst = 0.0
    for k in (0.7, 1.3):
        f = lambda s, k=k: jost(s, k, p)
        for x in np.linspace(0, 10, 101):
            side, d = (1, 2.5e-3) if x < 0.1 else (0, 1e-2)
            fpp = (kdv.second_derivative(lambda s: f(s).real, x, d, side)
                   + 1j * kdv.second_derivative(lambda s: f(s).imag, x, d, side))
            worst = max(worst, abs(-fpp + (kdv.Q_closed(x, p) - k * k) * f(x)))
    return [Check("jost_residual", worst, 1e-6)]


def chk_embedded(ctx):
    r = kdv.embedded_state_check(Params(1.0), 1.0)
    s = kdv.embedded_state_check(Params(1.0), 1.05)
    return [Check("embedded_bounded", r["growth_ratio"], 1.5),
            Check("embedded_contrast_growth", s["growth_ratio"], 1.5, mode="min")]


# ---------------------------------------------------------------------------
# hardy


def _eps_blaschke(eps=0.5):
    return Blaschke(approx_family(Params(1.0), eps).z)


def chk_biorth(ctx):
    B = _eps_blaschke()
    basis = biorth_basis(B)
    worst = 0.0
    for n in range(3):
        for m in range(3):
            v = complex(basis[n](np.array([B.zeros[m]]))[0])
            w = inner_biorth(Kernel(B.zeros[m]), B, n)
            worst = max(worst, abs(v - (n == m)), abs(np.conj(w) - (n == m)))
    return [Check("biorthogonality", worst, 1e-12)]


def chk_rank_one(ctx):
    z = 0.4 + 0.7j
    f = Kernel(-0.3 + 1.1j)
    a = rank_one_hankel(z, f)
    b = hankel_apply_rational(lambda k: 1 / (k - z), [z], f)
    s = np.array([0.3 + 0.2j, -1.7 + 0.5j, 2.0 + 3.0j])
    return [Check("rank_one_hankel", float(np.max(np.abs(a(s) - b(s)))), 1e-12)]


def chk_symmetry(ctx):
    worst = 0.0
    for x, t in ((-3.0, 0.5), (1.0, 0.0), (0.5, 0.25)):
        worst = max(worst, check_symmetry(kdv.symbol_xt(Params(1.0), x, t), tol=np.inf))
    return [Check("symbol_symmetry", worst, 1e-10)]


# ---------------------------------------------------------------------------
# hankel


def chk_vanishing(ctx):
    opts = kdv.SolverOptions(method="contour")
    worst = 0.0
    for x in (0.25, 1.0, 5.0):
        plan = kdv.make_plan(Params(1.0), x, 0.0, opts)
        worst = max(worst, abs(kdv.evaluate(Params(1.0), x, 0.0, plan, opts).logdet.value))
    return [Check("logdet_vanishes_t0", worst, 1e-6)]


def chk_rank_one_det(ctx):
    worst = 0.0
    for x, t in ((0.3, 0.0), (-1.0, 0.2), (2.0, 0.5)):
        H = hankel.build(split_symbol(kdv.soliton_symbol(x, t, 1.0, 2.0), 1.0), None)
        exact = np.log(1 + (2.0 / 2) * np.exp(-2 * x + 8 * t))
        worst = max(worst, abs(H.logdet().value - exact))
    return [Check("rank_one_det", worst, 1e-9)]


def chk_stability(ctx):
    p, x, t = Params(1.0), -3.0, 0.5
    sym = kdv.symbol_xt(p, x, t).symbol()
    base = kdv.SolverOptions(nodes=256, n_max=256)
    plan = kdv.plan_contour(sym, t, x, base)
    split = split_symbol(sym, plan.h)
    a = hankel.build(split, plan.grid, False).logdet().value
    b = hankel.build(split, plan.grid.refined(), False).logdet().value
    dh = 0.0
    for h in (0.5, 0.75):
        hp = kdv.plan_contour(sym, t, x, kdv.SolverOptions(h=h, nodes=512, n_max=512))
        dh = max(dh, abs(b - hankel.build(split_symbol(sym, h), hp.grid, False).logdet().value))
    return [Check("node_doubling", abs(a - b), 1e-7), Check("height_change", dh, 1e-7)]


def chk_soliton(ctx):
    worst = 0.0
    for t in (0.0, 0.5):
        for x in np.linspace(-5, 5, 41):
            worst = max(worst, abs(kdv.hankel_soliton(x, t) - kdv.soliton(x, t)))
    return [Check("soliton_end_to_end", worst, 1e-8)]


def chk_eps_paths(ctx):
    p = Params(1.0)
    d = max(abs(kdv.u_eps(p, 0.5, x, 0.0) - kdv.Q_eps(p, 0.5, x, fd_check=False)) for x in (1.0, 2.0))
    fam = approx_family(p, 0.5)
    x, t = 1.0, 0.1
    sym = kdv.symbol_eps(fam, x, t)
    h = max(q.imag for q, _ in sym.base_poles) + 0.5
    grid = kdv._contour_grid(sym, h, t, 512)
    rep = hankel.block_determinant_check(split_symbol(sym, h), grid, Blaschke(fam.z))
    return [Check("eps_two_paths", d, 1e-8), Check("block_determinant", rep["diff"], 1e-6)]


# ---------------------------------------------------------------------------
# reconstruction


def chk_closed_forms(ctx):
    p = Params(1.0)
    return [Check("Q_at_0", abs(kdv.Q_closed(0.0, p)), 1e-15),
            Check("Q_at_half_pi", abs(kdv.Q_closed(np.pi / 2, p) - 1.2104714), 1e-6),
            Check("positon_equals_Q", abs(kdv.positon(2.0, 0.0) - kdv.Q_closed(2.0, p)), 1e-12),
            Check("positon_root", abs(kdv.positon_root(0.0) + 1.277), 1e-3)]


def chk_tau_t0(ctx):
    p = ctx.params
    return [Check("tau_x1_t0", abs(kdv.tau_full(p, 1.0, 0.0, ctx.opts) - (2 - 0.5 * np.sin(2.0))), 1e-9)]


def chk_reconstruction(ctx):
    p, o = ctx.params, ctx.opts
    right = np.linspace(0.25, 10, 14)
    er = max(abs(kdv.u_total(p, x, 0.0, o) - kdv.Q_closed(x, p)) for x in right)
    el = max(abs(kdv.u_total(p, -x, 0.0, o) - kdv.Q_closed(x, p)) for x in right)
    ev = max(abs(kdv.u_total(p, -x, 0.0, o) - kdv.u_total(p, x, 0.0, o)) for x in (0.5, 1, 2, 5))
    return [Check("reconstruction_right", er, 1e-6), Check("reconstruction_left", el, 5e-4),
            Check("evenness_t0", ev, 5e-4)]


def chk_eps_limit(ctx):
    p = Params(1.0)
    e = [abs(kdv.Q_eps(p, eps, 1.0) - kdv.Q_closed(1.0, p)) for eps in (0.2, 0.1)]
    u = [abs(kdv.u_eps(p, eps, 1.0, 0.2) - kdv.u_total(p, 1.0, 0.2)) for eps in (0.1, 0.05)]
    return [Check("Q_eps_converges", e[0] / e[1], 1.4, mode="min"),
            Check("u_eps_close", u[0], 0.05),
            Check("u_eps_converges", u[0] / u[1], 1.0, mode="min")]


# ---------------------------------------------------------------------------
# oracle


def chk_oracle_soliton(ctx):
    g = pde_oracle.PeriodicGrid(30.0, 2**12)
    ev = pde_oracle.evolve(pde_oracle.initial_samples("soliton", g), g,
                           pde_oracle.IntegratorConfig(1e-4, 1.0), [0.5, 1.0])
    err = float(np.max(np.abs(ev.at(1.0) - kdv.soliton(g.xs, 1.0))))
    xs = np.linspace(-10, 10, 41)
    hk = [kdv.hankel_soliton(x, 0.5) for x in xs]
    rep = pde_oracle.compare_window(xs, hk, ev.at(0.5), g, window=(-10, 10), tolerance=1e-5)
    zero = pde_oracle.evolve(np.zeros(g.N), g, pde_oracle.IntegratorConfig(1e-3, 0.1))
    return [Check("oracle_soliton_T1", err, 1e-6),
            Check("oracle_mass_drift", float(np.ptp(ev.mass)), 1e-8),
            Check("oracle_zero", float(np.max(np.abs(zero.snapshots))), 0.0),
            Check("hankel_soliton_vs_oracle", rep.max_err, 1e-5)]


def chk_oracle_Q(ctx):
    T = 0.25
    g = pde_oracle.PeriodicGrid(400.0, 2**15)
    cfg = pde_oracle.IntegratorConfig(1e-4, T, lowpass=pde_oracle.radiation_cutoff(g.L, T))
    ev = pde_oracle.evolve(pde_oracle.initial_samples("Q", g, ctx.rho), g, cfg)
    xs = np.linspace(-8, 8, 17)
    uf = [kdv.u_total(ctx.params, x, T, ctx.opts) for x in xs]
    rep = pde_oracle.compare_window(xs, uf, ev.at(T), g, window=(-8, 8), tolerance=5e-3)
    return [Check("oracle_Q_t0.25", rep.max_err, 5e-3)]


SUITES = {
    "scattering": [chk_constants, chk_unitarity, chk_residues, chk_m_function, chk_jost, chk_embedded],
    "hardy": [chk_biorth, chk_rank_one, chk_symmetry],
    "hankel": [chk_vanishing, chk_rank_one_det, chk_stability, chk_soliton, chk_eps_paths],
    "reconstruction": [chk_closed_forms, chk_tau_t0, chk_reconstruction, chk_eps_limit],
    "oracle": [chk_oracle_soliton, chk_oracle_Q],
}


def run_suite(name: str, ctx: Context = Context()) -> list:
    if name == "all":
        fns = [f for s in SUITES.values() for f in s]
    elif name in SUITES:
        fns = SUITES[name]
    else:
        raise KeyError(name)
    out = []
    for fn in fns:
        t0 = time.perf_counter()
        try:
            checks = fn(ctx)
        except ArithmeticError as e:
            checks = [Check(fn.__name__[4:], float("nan"), float("nan"), status="fail")]
            checks[0].error = str(e)
        dt = (time.perf_counter() - t0) / max(len(checks), 1)
        for c in checks:
            c.seconds = dt
        out.extend(checks)
    return out
