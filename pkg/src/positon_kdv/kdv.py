"""Potentials and KdV solutions built from the Hankel-operator formula.

The solution is u = u0 + u1 with

    u0 = -2 d^2/dx^2 log det(I + H_{x,t}),
    u1 = -2 d^2/dx^2 log tau(x, t),
    tau = 1 + rho (x + 12 t) - (rho/2) sin(2x + 8t)
          + w Re[(I + H_{x,t})^{-1}(K_1 - xi_{x,t}(1) K_{-1})](1),

where K_m = H_{x,t} k_{m+i0}.  The weight w defaults to rho, which is what
the short-range limit of the determinant produces; w = rho/2 is available
through ``SolverOptions(tau_weight="half")``.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import hankel
from .hardy import Symbol, SymbolSplit, split_symbol
from .scattering import (ApproxFamily, Params, approx_family, reflection_rational,
                         solve_kappa, tau0)


class SolutionSingularity(ArithmeticError):
    """tau or det(I + H) vanishes near the requested point."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


def xi(k, x: float, t: float):
    k = np.asarray(k, complex)
    return np.exp(1j * (8 * k**3 * t + 2 * k * x))


def Q_closed(x, params: Params = Params()):
    """Q(x) = -2 (log tau0)''(|x|) in closed form."""
    rho = params.rho
    ax = np.abs(np.asarray(x, float))
    t0 = tau0(ax, params)
    if np.any(t0 <= 0):
        raise AssertionError("tau0 must stay positive")
    tp = 2 * rho * np.sin(ax) ** 2
    tpp = 2 * rho * np.sin(2 * ax)
    out = -2 * (tpp * t0 - tp**2) / t0**2
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# symbols


def _expm1_ratio(z):
    z = np.asarray(z, complex)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


@dataclass(frozen=True)
class SymbolXT:
    """phi_{x,t} = R xi - Res(R xi, i kappa) / (k - i kappa)."""

    params: Params
    x: float
    t: float
    c_shift: float = 0.0  # diagnostic: subtract the residue of a perturbed c
    kappa: float = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        bs = solve_kappa(self.params)
        object.__setattr__(self, "kappa", bs.kappa)
        object.__setattr__(self, "c", bs.c)
        R = reflection_rational(self.params)
        object.__setattr__(self, "_R", R)
        object.__setattr__(self, "_lower", R.poles[1:])

    def xi(self, k):
        return xi(k, self.x, self.t)

    @property
    def xi_kappa(self) -> float:
        """xi(i kappa) = exp(8 kappa^3 t - 2 kappa x)."""
        return float(np.exp(8 * self.kappa**3 * self.t - 2 * self.kappa * self.x))

    def pole_residue(self) -> complex:
        return 1j * self.c * self.xi_kappa

    def base(self, z, order=0):
        z = np.asarray(z, complex)
        return self._R(z) * self.xi(z) * (2j * z) ** order

    def deflated_reflection(self, k):
        """R - ic/(k - i kappa) = -ic (k + 2i kappa) / ((k - r1)(k - r2))."""
        k = np.asarray(k, complex)
        r1, r2 = self._lower
        return -1j * self.c * (k + 2j * self.kappa) / ((k - r1) * (k - r2))

    def __call__(self, k):
        k = np.asarray(k, complex)
        ik = 1j * self.kappa
        dpsi_over = 1j * (8 * self.t * (k * k + ik * k + ik * ik) + 2 * self.x)
        dd = self.xi_kappa * _expm1_ratio((k - ik) * dpsi_over) * dpsi_over
        out = self.deflated_reflection(k) * self.xi(k) + 1j * self.c * dd
        if self.c_shift:
            out = out - 1j * self.c_shift * self.xi_kappa / (k - ik)
        return out

    def symbol(self) -> Symbol:
        ik = 1j * self.kappa
        k2 = (1, -2 * self.kappa, 4 * self.kappa**2)
        r0 = self.pole_residue()
        s0 = 1j * (self.c + self.c_shift) * self.xi_kappa
        return Symbol(base=self.base, base_poles=((ik, tuple(r0 * f for f in k2)),),
                      terms=((ik, tuple(-s0 * f for f in k2)),), evaluator=self)


def symbol_xt(params: Params, x: float, t: float, c_shift: float = 0.0) -> SymbolXT:
    return SymbolXT(params, float(x), float(t), float(c_shift))


def symbol_eps(family: ApproxFamily, x: float, t: float) -> Symbol:
    """phi^eps_{x,t}: R_eps xi with the principal parts at i kappa_pm removed."""
    R = family.R

    def base(z, order=0):
        z = np.asarray(z, complex)
        return R(z) * xi(z, x, t) * (2j * z) ** order

    def res_triple(p):
        r0 = R.residue(p) * complex(xi(p, x, t))
        return (r0, 2j * p * r0, (2j * p) ** 2 * r0)

    upper = [p for p in R.poles if p.imag > 0]
    base_poles = tuple((p, res_triple(p)) for p in upper)
    kaps = (1j * family.kappa_plus, 1j * family.kappa_minus)
    terms = tuple((p, tuple(-v for v in res_triple(p))) for p in kaps)
    return Symbol(base=base, base_poles=base_poles, terms=terms)


def soliton_symbol(x: float, t: float, kappa: float = 1.0, c: float = 2.0) -> Symbol:
    """Reflectionless symbol -Res/(k - i kappa) with residue i c xi(i kappa)."""
    r0 = 1j * c * np.exp(8 * kappa**3 * t - 2 * kappa * x)
    r = (-r0, 2 * kappa * r0, -4 * kappa**2 * r0)
    return Symbol(terms=((1j * kappa, r),))


# ---------------------------------------------------------------------------
# realization choice


@dataclass(frozen=True)
class SolverOptions:
    method: str = "auto"  # auto | contour | halfline
    h: float | None = None
    nodes: int | None = None  # initial contour node count (doubled to tol)
    tol: float = 1e-8
    n_max: int = 2048
    halfline_nodes: int = 256
    fd_step: float | None = None
    tau_weight: str = "rho"  # "rho" or "half"
    c_shift: float = 0.0  # perturbs the norming constant (sensitivity checks only)

    def __post_init__(self):
        if self.method not in ("auto", "contour", "halfline"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tau_weight not in ("rho", "half"):
            raise ValueError(f"unknown tau_weight {self.tau_weight!r}")


T_HEIGHTS = (0.5, 1.0, 1.5, 2.0, 3.0)
T0_HEIGHTS = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0)


def choose_height(sym: Symbol, candidates, clearance: float = 0.2) -> float:
    """Pick the admissible height minimizing the peak of the contour integrand.

    Heights too close to a pole of the base are skipped; ties go to the
    larger height.
    """
    pole_h = [p.imag for p, _ in sym.base_poles]
    s = np.linspace(-8, 8, 321)
    best, score = None, np.inf
    for h in candidates:
        if any(abs(h - ph) < clearance * max(ph, 0.25) for ph in pole_h):
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            m = np.max(np.abs(sym.base(s + 1j * h)))
        if not np.isfinite(m):
            continue
        if m <= score * (1 + 1e-12):
            best, score = h, m
    if best is None:
        raise ValueError("no admissible contour height")
    return float(best)


def _contour_grid(sym: Symbol, h: float, t: float, n: int) -> hankel.ContourGrid:
    f = lambda z: sym.base(z)
    if t > 0:
        S = hankel.decay_halfwidth(f, h)
        return hankel.uniform_grid(h, S, n)
    return hankel.sinh_grid(h, n, L=1.0, f=f)


def bent_parameters(sym: Symbol, x: float, t: float) -> tuple:
    """Flat height h0 and half-width s0 of the bent contour for t > 0.

    For x < 0 the phase of xi has real saddles at +-sqrt(|x| / 12t); the
    flat part must reach past them, and is kept low so that
    |xi| <= exp(2 h0 |x|) stays moderate.  Poles of the base must be
    classified correctly, so the flat part also covers their real parts.
    """
    h0 = float(np.clip(1.5 / max(abs(x), 1e-300), 0.1, 0.25)) if x < 0 else 0.25
    pole_h = [p.imag for p, _ in sym.base_poles]
    while any(abs(h0 - ph) < 0.2 * max(ph, 0.1) for ph in pole_h) and h0 > 1e-3:
        h0 *= 0.7
    k0 = np.sqrt(max(-x, 0.0) / (12 * t))
    reach = max([abs(p.real) for p, _ in sym.base_poles] + [0.0])
    s0 = max(1.5, 1.15 * k0 + 0.5, reach + 0.75)
    return h0, s0


def _bent_grid(sym: Symbol, x: float, t: float, n: int) -> hankel.ContourGrid:
    h0, s0 = bent_parameters(sym, x, t)
    S = hankel.bent_extent(lambda z: sym.base(z), h0, s0)
    return hankel.bent_grid(h0, s0, max(S, s0 + 2 * hankel.BEND_WIDTH), n)


@dataclass(frozen=True)
class Plan:
    """Frozen discretization reused across a finite-difference stencil."""

    method: str
    h: float = 0.0
    grid: hankel.ContourGrid | None = None
    nodes: int = 0
    est_error: float = 0.0


def plan_contour(sym: Symbol, t: float, x: float, opts: SolverOptions) -> Plan:
    n = opts.nodes or 256
    if opts.h is not None:
        h = float(opts.h)
        grid = _contour_grid(sym, h, t, n)
    elif t > 0:
        grid = _bent_grid(sym, x, t, n)
        h = grid.h
    else:
        h = choose_height(sym, T0_HEIGHTS)
        grid = _contour_grid(sym, h, t, n)
    split = split_symbol(sym, h)
    if opts.nodes is not None and opts.n_max <= opts.nodes:
        # fixed node count: no doubling, error left unestimated
        return Plan("contour", h, grid, grid.count, float("nan"))
    H, ld = hankel.converge(split, grid, tol=opts.tol, n_max=opts.n_max, derivatives=False)
    if ld.est_error > opts.tol:
        warnings.warn(f"contour not converged at x={x}, t={t}: node doubling changes "
                      f"log det by {ld.est_error:.1e} at {H.grid.count} nodes")
    return Plan("contour", h, H.grid, H.grid.count, ld.est_error)


def make_plan(params: Params, x: float, t: float, opts: SolverOptions) -> Plan:
    if t < 0:
        raise ValueError("t must be non-negative")
    method = opts.method
    if method == "auto":
        # the half-line form assumes the exact residue is removed at i kappa
        method = "halfline" if t == 0 and not opts.c_shift else "contour"
    if method == "halfline":
        if t != 0:
            raise ValueError("the half-line realization is implemented for t = 0 only")
        if opts.c_shift:
            raise ValueError("the half-line realization needs the unperturbed norming constant")
        # the kernel jumps across gamma + alpha = L, so the error grows like
        # L^4 at fixed n; double n with each doubling of L = 2|x| past 8
        scale = 2 ** max(0, int(np.ceil(np.log2(max(-2 * x, 1.0) / 8))))
        return Plan("halfline", nodes=opts.halfline_nodes * scale)
    return plan_contour(symbol_xt(params, x, t, opts.c_shift).symbol(), t, x, opts)


# ---------------------------------------------------------------------------
# pointwise quantities


@dataclass
class Evaluation:
    logdet: hankel.LogDet
    tau: float
    tau_imag: float
    operator: object = field(repr=False, default=None)


def _tau_weight(params: Params, opts: SolverOptions) -> float:
    return params.rho if opts.tau_weight == "rho" else params.rho / 2


def evaluate(params: Params, x: float, t: float, plan: Plan, opts: SolverOptions,
             derivatives: bool = False) -> Evaluation:
    rho = params.rho
    tau_lin = 1 + rho * (x + 12 * t) - 0.5 * rho * np.sin(2 * x + 8 * t)
    xi1 = complex(xi(1.0, x, t))
    if plan.method == "halfline":
        R = reflection_rational(params)
        res = [R.residue(p) for p in R.poles]
        op = hankel.HalfLineHankel(R.poles, res, x, plan.nodes)
        ld = op.logdet(estimate=False)
        val = op.resolvent_smooth([(1.0, 1.0), (-1.0, -xi1)], at=1.0)
    else:
        sx = symbol_xt(params, x, t, opts.c_shift)
        split = split_symbol(sx.symbol(), plan.h, check=False)
        op = hankel.build(split, plan.grid, derivatives=derivatives)
        ld = op.logdet()
        val = complex(op.resolvent_smooth([(1.0, 1.0), (-1.0, -xi1)], np.array([1.0]))[0])
    ld.est_error = plan.est_error
    tau = tau_lin + _tau_weight(params, opts) * val.real
    return Evaluation(ld, float(tau), float(val.imag), op)


_W5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_W5_RIGHT = np.array([35.0, -104.0, 114.0, -56.0, 11.0]) / 12.0


def second_derivative(f, x: float, d: float, side: int = 0) -> float:
    """Second difference with one Richardson level.

    side=0 is central (error d^4 + d^6 before extrapolation); side=+1/-1
    uses a one-sided stencil on that side, whose error starts at d^3.
    """
    def D(step):
        if side == 0:
            pts = x + step * np.arange(-2, 3)
            w = _W5
        else:
            pts = x + side * step * np.arange(5)
            w = _W5_RIGHT
        return float(w @ np.array([f(p) for p in pts])) / step**2
    if side == 0:
        return (16 * D(d) - D(2 * d)) / 15
    return (8 * D(d) - D(2 * d)) / 7


def _fd_setup(x: float, t: float, opts: SolverOptions):
    d = opts.fd_step or max(1e-2, 1e-2 * (1 + abs(x)) / 10)
    side = 0
    if t == 0 and abs(x) < 4 * d:
        # Q is not C^1 at 0: keep the stencil on one side, which is a
        # lower-order formula and so wants a shorter step
        side = 1 if x >= 0 else -1
        d = opts.fd_step or 2.5e-3
    return d, side


@dataclass
class PointResult:
    x: float
    t: float
    u: float
    u0: float
    u1: float
    tau: float
    logdet: float
    est_error: float
    method: str = ""
    imag: float = 0.0

    def row(self):
        return (self.x, self.t, self.u, self.u0, self.u1, self.tau, self.logdet, self.est_error)


def u0(params: Params, x: float, t: float, opts: SolverOptions = SolverOptions(),
       plan: Plan | None = None) -> float:
    plan = plan or make_plan(params, x, t, opts)
    if plan.method == "halfline":
        d, side = _fd_setup(x, t, opts)
        f = lambda s: evaluate(params, s, t, plan, opts).logdet.real
        return -2 * second_derivative(f, x, d, side)
    ev = evaluate(params, x, t, plan, opts, derivatives=True)
    return -2 * ev.operator.logdet_dx2().real


def tau_full(params: Params, x: float, t: float, opts: SolverOptions = SolverOptions(),
             plan: Plan | None = None) -> float:
    plan = plan or make_plan(params, x, t, opts)
    return evaluate(params, x, t, plan, opts).tau


def u1(params: Params, x: float, t: float, opts: SolverOptions = SolverOptions(),
       plan: Plan | None = None) -> float:
    plan = plan or make_plan(params, x, t, opts)
    d, side = _fd_setup(x, t, opts)

    def logtau(s):
        tau = evaluate(params, s, t, plan, opts).tau
        if tau <= 0:
            raise SolutionSingularity(f"tau = {tau:.3e} <= 0 near x = {s}", (s, t))
        return np.log(tau)

    return -2 * second_derivative(logtau, x, d, side)


def solve_point(params: Params, x: float, t: float,
                opts: SolverOptions = SolverOptions()) -> PointResult:
    plan = make_plan(params, x, t, opts)
    ev = evaluate(params, x, t, plan, opts, derivatives=plan.method == "contour")
    if ev.tau <= 0:
        raise SolutionSingularity(f"tau = {ev.tau:.3e} <= 0 at x = {x}, t = {t}", (x, t))
    if plan.method == "contour":
        a = -2 * ev.operator.logdet_dx2()
        v0, im = a.real, abs(a.imag)
    else:
        v0, im = u0(params, x, t, opts, plan), 0.0
    v1 = u1(params, x, t, opts, plan)
    im = max(im, abs(ev.logdet.value.imag))
    est = ev.logdet.est_error if plan.method == "contour" else ev.operator.logdet().est_error
    return PointResult(float(x), float(t), v0 + v1, v0, v1, ev.tau, ev.logdet.real,
                       float(est), plan.method, float(im))


def u_total(params: Params, x: float, t: float, opts: SolverOptions = SolverOptions()) -> float:
    return solve_point(params, x, t, opts).u


# ---------------------------------------------------------------------------
# field evaluation


@dataclass
class FieldGrid:
    xs: np.ndarray
    ts: np.ndarray
    records: list  # PointResult, row-major over t then x
    meta: dict = field(default_factory=dict)

    COLUMNS = ("x", "t", "u", "u0", "u1", "tau", "logdet", "est_error")

    def array(self) -> np.ndarray:
        return np.array([r.row() for r in self.records], float)

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.COLUMNS.index(name)].reshape(len(self.ts), len(self.xs))


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("POSITON_KDV_THREADS")
    if env:
        return max(1, int(env))
    return default or min(8, os.cpu_count() or 1)


def evaluate_field(params: Params, xs, ts, opts: SolverOptions = SolverOptions(),
                   threads: int | None = None) -> FieldGrid:
    xs = np.asarray(xs, float)
    ts = np.asarray(ts, float)
    jobs = [(x, t) for t in ts for x in xs]
    n = thread_count(threads)
    if n == 1:
        recs = [solve_point(params, x, t, opts) for x, t in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            recs = list(pool.map(lambda a: solve_point(params, a[0], a[1], opts), jobs))
    meta = {"rho": params.rho, "method": opts.method, "tau_weight": opts.tau_weight}
    return FieldGrid(xs, ts, recs, meta)


# ---------------------------------------------------------------------------
# short-range approximations


def _eps_split_rank(family: ApproxFamily, x: float) -> SymbolSplit:
    """Finite-rank split of phi^eps_{x,0} for x >= 0 (no contour part)."""
    sym = symbol_eps(family, x, 0.0)
    top = max(p.imag for p, _ in sym.base_poles) + 1.0
    return split_symbol(sym, top)


def Q_eps(params: Params, eps: float, x: float, fd_check: bool = True) -> float:
    """Short-range potential from the rank-3 determinant; even in x."""
    fam = approx_family(params, eps)
    ax = abs(float(x))
    H = hankel.build(_eps_split_rank(fam, ax), None)
    val = -2 * H.logdet_dx2().real
    if fd_check and ax >= 0.05:
        f = lambda s: hankel.build(_eps_split_rank(fam, s), None, False).logdet().real
        fd = -2 * second_derivative(f, ax, 1e-2)
        if abs(fd - val) > 1e-6:
            warnings.warn(f"Q_eps analytic/FD mismatch {abs(fd - val):.2e} at x={x}")
    return float(val)


def u_eps(params: Params, eps: float, x: float, t: float,
          opts: SolverOptions = SolverOptions()) -> float:
    """Dyson-formula solution for the short-range data; t = 0 uses evenness."""
    if t < 0:
        raise ValueError("t must be non-negative")
    fam = approx_family(params, eps)
    if t == 0:
        x = abs(x)
    sym = symbol_eps(fam, x, t)
    plan = plan_contour(sym, t, x, opts)
    H = hankel.build(split_symbol(sym, plan.h), plan.grid)
    return float(-2 * H.logdet_dx2().real)


# ---------------------------------------------------------------------------
# reference solutions


def tau_positon(x, t):
    return 1 + x + 12 * t - 0.5 * np.sin(2 * (x + 4 * t))


def positon_root(t: float = 0.0) -> float:
    c = -12 * t - 1
    return float(brentq(lambda s: tau_positon(s, t), c - 0.5, c + 0.5, xtol=1e-14))


def positon(x, t):
    x = np.asarray(x, float)
    tau = tau_positon(x, t)
    if np.any(np.abs(tau) < 1e-12):
        raise SolutionSingularity("positon tau vanishes", positon_root(t))
    arg = 2 * (x + 4 * t)
    tp = 1 - np.cos(arg)
    tpp = 2 * np.sin(arg)
    out = -2 * (tpp * tau - tp**2) / tau**2
    return out if out.ndim else float(out)


def soliton(x, t):
    out = -2 / np.cosh(np.asarray(x, float) - 4 * t) ** 2
    return out if np.ndim(out) else float(out)


def hankel_soliton(x: float, t: float, kappa: float = 1.0, c: float = 2.0) -> float:
    """-2 (log det)'' for the reflectionless rank-one symbol, by trace identity."""
    H = hankel.build(split_symbol(soliton_symbol(x, t, kappa, c), 1.0), None)
    return float(-2 * H.logdet_dx2().real)


def embedded_state_check(params: Params = Params(), lam: float = 1.0, x_max: float = 200.0,
                         rtol: float = 1e-11) -> dict:
    """Shoot the odd solution of -y'' + Q y = lam y and report its decay."""
    def rhs(s, Y):
        return [Y[1], (Q_closed(s, params) - lam) * Y[0]]

    xs = np.linspace(0, x_max, 200001)
    sol = solve_ivp(rhs, (0, x_max), [0.0, 1.0], method="DOP853", t_eval=xs,
                    rtol=rtol, atol=1e-13)
    y = sol.y[0]
    tail = xs >= 10
    xy = np.abs(xs[tail] * y[tail])
    sq = y[tail] ** 2
    dx = xs[1] - xs[0]
    mid = xs[tail] >= (10 + x_max) / 2
    first = xy[~mid].max()
    second = xy[mid].max()
    return {
        "lambda": lam,
        "y0": float(y[0]),
        "sup_xy": float(xy.max()),
        "growth_ratio": float(second / first),
        "tail_l2": float(np.sum(sq) * dx),
        "tail_l2_second_half": float(np.sum(sq[mid]) * dx),
        "bounded": bool(second / first < 1.5),
    }
