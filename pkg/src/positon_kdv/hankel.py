"""Numerical Hankel operators: Nystrom discretization, Fredholm
determinants, resolvents and x-derivatives.

Contour realization
-------------------
For a split symbol (finite-rank poles p_n with residues r_n, plus a base
function sampled on the line R + ih) the operator is represented by a
bordered Cauchy matrix.  With node set y = (z_1..z_N, p_1..p_r) and column
weights

    c_b = i w_b f(z_b) / (2 pi)   for contour nodes,
    c_b = -r_n                    for pole p_n,

one has N_ab = c_b / (y_a + y_b), det(I + H) = det(I + N) and

    ((I + H)^{-1} g)(p) = g(p) - sum_b c_b v_b / (p + y_b),   (I + N) v = g(y).

Half-line realization
---------------------
When the symbol is a(k) e^{2ikx} (t = 0, x < 0) minus the principal parts
of its upper poles, the Fourier image of H is an integral operator on
L^2(0, L), L = -2x, with kernel G(gamma + alpha) on gamma + alpha < L.
That operator is discretized by Gauss-Legendre Nystrom in scaled
coordinates; the exponentially large upper-pole piece is peeled off as an
explicit low-rank term and handled by the determinant lemma.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .hardy import Blaschke, SymbolSplit, model_projection_matrix


class SingularDeterminantError(ArithmeticError):
    """det(I + H) vanishes numerically: a singularity of the solution."""


class IllConditionedError(ArithmeticError):
    """The chosen contour carries samples too large for double precision."""


# ---------------------------------------------------------------------------
# contour grids


@dataclass(frozen=True)
class ContourGrid:
    """Quadrature nodes z_j and complex weights dz_j on a contour in C+.

    ``h`` is the height of the flat part; for horizontal grids every node
    sits at that height and the weights are positive.
    """

    h: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    kind: str = "sinh"
    scale: float = 1.0  # L for sinh grids, half-width S otherwise
    span: float = 0.0  # u-range U for sinh grids, flat half-width s0 for bent ones

    @property
    def count(self) -> int:
        return len(self.nodes)

    def refined(self, factor: int = 2) -> "ContourGrid":
        n = self.count * factor
        if self.kind == "sinh":
            return sinh_grid(self.h, n, L=self.scale, U=self.span)
        if self.kind == "bent":
            return bent_grid(self.h, self.span, self.scale, n)
        return uniform_grid(self.h, self.scale, n)


def _midpoints(a: float, n: int):
    du = 2 * a / n
    return -a + (np.arange(n) + 0.5) * du, du


def sinh_grid(h: float, n: int = 256, L: float = 1.0, U: float | None = None,
              f: Callable | None = None, tol: float = 1e-14) -> ContourGrid:
    """Nodes ih + L sinh(u) on a midpoint rule in u.

    Without an explicit U the range grows until |f| times the Jacobian
    drops below ``tol`` relative to its peak (or U = 12 without f).
    """
    if U is None:
        U = 12.0
        if f is not None:
            us = np.linspace(0, 40, 801)
            z = 1j * h + L * np.sinh(us)
            mag = np.abs(f(z)) * L * np.cosh(us) + np.abs(f(-np.conj(z))) * L * np.cosh(us)
            peak = mag.max()
            big = np.nonzero(mag > tol * peak)[0]
            U = float(us[min(big[-1] + 1, len(us) - 1)]) if len(big) else 1.0
            U = max(U, 1.0)
    u, du = _midpoints(U, n)
    return ContourGrid(h, 1j * h + L * np.sinh(u), L * np.cosh(u) * du, "sinh", L, U)


def uniform_grid(h: float, S: float, n: int = 256) -> ContourGrid:
    s, ds = _midpoints(S, n)
    return ContourGrid(h, s + 1j * h, np.full(n, ds), "uniform", S, 0.0)


BEND_SLOPE = 1 / np.sqrt(3.0)  # rays at angle pi/6, where exp(8ik^3 t) decays fastest
BEND_WIDTH = 0.5


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    return 0.5 * (1 + np.tanh(v / 2))


def bent_profile(s, h0: float, s0: float):
    """Height and slope of a contour flat at h0 on |s| < s0, rising at pi/6 beyond."""
    w = BEND_WIDTH
    eta = h0 + BEND_SLOPE * w * (_softplus((s - s0) / w) + _softplus((-s - s0) / w))
    deta = BEND_SLOPE * (_sigmoid((s - s0) / w) - _sigmoid((-s - s0) / w))
    return eta, deta


def bent_grid(h0: float, s0: float, S: float, n: int = 256) -> ContourGrid:
    """Midpoint rule in s on z(s) = s + i eta(s), s in [-S, S].

    Symmetric under z -> -conj(z), so symmetric symbols keep real determinants.
    """
    s, ds = _midpoints(S, n)
    eta, deta = bent_profile(s, h0, s0)
    return ContourGrid(h0, s + 1j * eta, (1 + 1j * deta) * ds, "bent", S, s0)


def bent_extent(f: Callable, h0: float, s0: float, tol: float = 1e-17, smax: float = 200.0) -> float:
    s = np.linspace(0, smax, 8001)
    eta, deta = bent_profile(s, h0, s0)
    z = s + 1j * eta
    with np.errstate(over="ignore", under="ignore"):
        mag = np.maximum(np.abs(f(z)), np.abs(f(-np.conj(z)))) * np.abs(1 + 1j * deta)
    mag = np.nan_to_num(mag, nan=0.0, posinf=np.finfo(float).max)
    big = np.nonzero(mag > tol * mag.max())[0]
    return float(s[min(big[-1] + 1, len(s) - 1)]) + BEND_WIDTH if len(big) else 1.0


def decay_halfwidth(f: Callable, h: float, tol: float = 1e-17, smax: float = 400.0) -> float:
    """Smallest S with |f(s + ih)| <= tol * peak for all |s| >= S (scan)."""
    s = np.linspace(0, smax, 16001)
    mag = np.maximum(np.abs(f(s + 1j * h)), np.abs(f(-s + 1j * h)))
    peak = mag.max()
    big = np.nonzero(mag > tol * peak)[0]
    if len(big) == 0:
        return 1.0
    return float(s[min(big[-1] + 1, len(s) - 1)])


# ---------------------------------------------------------------------------
# bordered Cauchy discretization


@dataclass
class LogDet:
    value: complex
    node_count: int
    est_error: float = float("nan")

    @property
    def real(self) -> float:
        return float(self.value.real)


class DiscretizedHankel:
    """I + N with N_ab = c_b / (y_a + y_b), plus optional x-derivative columns."""

    def __init__(self, y, c, cx=None, cxx=None, grid: ContourGrid | None = None,
                 split: SymbolSplit | None = None):
        self.y = np.asarray(y, complex)
        self.c = np.asarray(c, complex)
        self.cx = None if cx is None else np.asarray(cx, complex)
        self.cxx = None if cxx is None else np.asarray(cxx, complex)
        self.grid = grid
        self.split = split
        self.n_contour = 0 if grid is None else grid.count
        if not np.all(np.isfinite(self.c)):
            raise ValueError("non-finite symbol sample")
        self._lu = None

    @classmethod
    def build(cls, split: SymbolSplit, grid: ContourGrid | None, derivatives: bool = True):
        ys, cs, cxs, cxxs = [], [], [], []
        if grid is not None:
            if abs(grid.h - split.h) > 1e-14:
                raise ValueError("grid height differs from the split height")
            z, w = grid.nodes, grid.weights
            pre = 1j * w / (2 * np.pi)
            ys.append(z)
            cs.append(pre * split.entire(z, 0))
            if derivatives:
                cxs.append(pre * split.entire(z, 1))
                cxxs.append(pre * split.entire(z, 2))
        if split.poles:
            p = np.array([q for q, _ in split.poles], complex)
            r = np.array([v for _, v in split.poles], complex).reshape(len(p), -1)
            if grid is not None and np.any(p.imag <= 0):
                raise ValueError("finite-rank poles must lie in the upper half-plane")
            ys.append(p)
            cs.append(-r[:, 0])
            if derivatives:
                cxs.append(-r[:, 1] if r.shape[1] > 1 else np.zeros(len(p), complex))
                cxxs.append(-r[:, 2] if r.shape[1] > 2 else np.zeros(len(p), complex))
        if not ys:
            ys, cs, cxs, cxxs = ([np.zeros(0, complex)] for _ in range(4))
        cat = lambda parts: np.concatenate(parts) if parts else None
        return cls(cat(ys), cat(cs), cat(cxs) if derivatives else None,
                   cat(cxxs) if derivatives else None, grid=grid, split=split)

    @property
    def size(self) -> int:
        return len(self.y)

    def _cauchy(self):
        return 1.0 / (self.y[:, None] + self.y[None, :])

    def _scales(self):
        # column equilibration: keeps pivots O(1) when a pole column is huge
        return 1.0 / np.maximum(1.0, np.abs(self.c) / self.y.imag)

    def _factor(self):
        if self._lu is None:
            s = self._scales()
            M = (np.eye(self.size) + self.c[None, :] * self._cauchy()) * s[None, :]
            with warnings.catch_warnings():
                # an exactly singular pivot is reported below as a domain error
                warnings.simplefilter("ignore", LinAlgWarning)
                lu, piv = lu_factor(M, check_finite=False)
            d = np.diag(lu)
            if np.min(np.abs(d)) <= 1e-13 * max(1.0, np.max(np.abs(d))):
                if self.n_contour and np.max(np.abs(self.c[:self.n_contour])) > 1e12:
                    raise IllConditionedError(
                        "contour samples exceed 1e12: lower the contour or bend it")
                raise SingularDeterminantError("determinant vanishes (solution singularity)")
            self._lu = (lu, piv, s)
        return self._lu

    def logdet(self) -> LogDet:
        if self.size == 0:
            return LogDet(0j, 0, 0.0)
        lu, piv, s = self._factor()
        d = np.diag(lu)
        swaps = int(np.sum(piv != np.arange(len(piv))))
        phase = np.angle(d).sum() + np.pi * swaps
        phase = (phase + np.pi) % (2 * np.pi) - np.pi
        val = np.log(np.abs(d)).sum() - np.log(s).sum() + 1j * phase
        return LogDet(complex(val), self.n_contour)

    def solve(self, g):
        lu, piv, s = self._factor()
        return s[:, None] * lu_solve((lu, piv), g, check_finite=False) if np.ndim(g) == 2 \
            else s * lu_solve((lu, piv), g, check_finite=False)

    def apply(self, f: Callable) -> Callable:
        """(H f)(s) = sum_b c_b f(y_b) / (s + y_b)."""
        cf = self.c * f(self.y)
        return lambda s: (cf / (np.asarray(s, complex)[..., None] + self.y)).sum(axis=-1)

    def resolvent_apply(self, g: Callable, p) -> complex:
        p = np.asarray(p, complex)
        if self.size == 0:
            return g(p)
        v = self.solve(g(self.y))
        return g(p) - (self.c * v / (p[..., None] + self.y)).sum(axis=-1)

    def resolvent_smooth(self, coeffs: Sequence[tuple], p) -> complex:
        """((I + H)^{-1} sum_j coef_j K_{m_j})(p) without cancellation.

        K_m = sum_b c_b q_b e_b with q_b = i/(y_b - m) and e_b = 1/(s + y_b);
        on that span (I + H)^{-1} acts as diag(c) (I + N)^{-1} diag(c)^{-1},
        so only the O(1) vector q is ever solved for.
        """
        p = np.asarray(p, complex)
        if self.size == 0:
            return np.zeros(p.shape, complex)
        q = sum(coef * 1j / (self.y - m) for m, coef in coeffs)
        lu, piv, s = self._factor()
        w = (self.c * s) * lu_solve((lu, piv), q, check_finite=False)
        return (w / (p[..., None] + self.y)).sum(axis=-1)

    def smooth_element(self, m: float) -> Callable:
        """K_m = H k_{m+i0}: sum_b c_b / (s + y_b) * i / (y_b - m)."""
        coef = self.c * 1j / (self.y - m)
        return lambda s: (coef / (np.asarray(s, complex)[..., None] + self.y)).sum(axis=-1)

    def logdet_dx(self) -> complex:
        if self.size == 0:
            return 0j
        C = self._cauchy()
        X1 = self.solve(C * self.cx[None, :])
        return complex(np.trace(X1))

    def logdet_dx2(self) -> complex:
        """tr((I+N)^{-1} N_xx) - tr(((I+N)^{-1} N_x)^2)."""
        if self.size == 0:
            return 0j
        if self.cx is None:
            raise ValueError("operator was built without derivative columns")
        C = self._cauchy()
        X1 = self.solve(C * self.cx[None, :])
        X2 = self.solve(C * self.cxx[None, :])
        return complex(np.trace(X2) - np.sum(X1 * X1.T))


def logdet(H: DiscretizedHankel) -> LogDet:
    return H.logdet()


def resolvent_apply(H: DiscretizedHankel, g: Callable, p) -> complex:
    return H.resolvent_apply(g, p)


def smooth_element(H: DiscretizedHankel, m: float) -> Callable:
    return H.smooth_element(m)


def logdet_dx2(H: DiscretizedHankel) -> complex:
    return H.logdet_dx2()


def build(split: SymbolSplit, grid: ContourGrid | None, derivatives: bool = True) -> DiscretizedHankel:
    return DiscretizedHankel.build(split, grid, derivatives)


def converge(split: SymbolSplit, grid: ContourGrid, tol: float = 1e-8, n_max: int = 2048,
             derivatives: bool = True):
    """Double the node count until successive log-determinants agree to tol.

    Returns the finer operator and its LogDet with the measured difference
    as est_error.
    """
    H = DiscretizedHankel.build(split, grid, derivatives)
    ld = H.logdet()
    while True:
        finer = grid.refined()
        H2 = DiscretizedHankel.build(split, finer, derivatives)
        ld2 = H2.logdet()
        err = abs(ld2.value - ld.value)
        ld2.est_error = float(err)
        if err <= tol or finer.count * 2 > n_max:
            return H2, ld2
        grid, H, ld = finer, H2, ld2


# ---------------------------------------------------------------------------
# diagnostics


def block_determinant_check(split: SymbolSplit, grid: ContourGrid, B: Blaschke,
                            tol: float = 1e-6) -> dict:
    """Compare det(I + H) computed densely with the model-space factorization

        det(I + H_Phi) * det(I + P_B (I + H_Phi)^{-1} H_s P_B),

    where H_s is the finite-rank part.  Its range lies in K_B and it
    vanishes on the orthogonal complement, so the second factor is a
    determinant of size len(B.zeros) taken in the basis (k_{z_n}).
    """
    zs = np.array(B.zeros)
    poles = [p for p, _ in split.poles]
    for p in poles:
        if np.min(np.abs(zs - p)) > 1e-10 or np.min(np.abs(zs + np.conj(p))) > 1e-10:
            raise ValueError("finite-rank poles must be zeros of B (closed under -conj)")
    full = DiscretizedHankel.build(split, grid, derivatives=False).logdet().value
    contour_only = SymbolSplit((), split.entire, split.h)
    Hphi = DiscretizedHankel.build(contour_only, grid, derivatives=False)
    ld_phi = Hphi.logdet().value

    def Hs(f):
        # H(r / (k - p)) f = i r f(p) k_{-conj p}
        vals = [(1j * r[0] * complex(f(np.array([p]))[0]), p) for p, r in split.poles]
        return lambda s: sum((a * 1j / (np.asarray(s, complex) + q) for a, q in vals),
                             np.zeros(np.shape(s), complex))

    def A(f):
        g = Hs(f)
        return lambda s: Hphi.resolvent_apply(g, np.asarray(s, complex))

    M = model_projection_matrix(B, A)
    sign, lab = np.linalg.slogdet(np.eye(len(zs)) + M)
    block = ld_phi + lab + 1j * np.angle(sign)
    diff = abs(np.exp(1j * (full.imag - block.imag)) * np.exp(full.real - block.real) - 1) \
        if full.real - block.real < 50 else np.inf
    return {"lhs": complex(full), "rhs": complex(block), "diff": float(diff),
            "tolerance": tol, "ok": bool(diff <= tol)}


# ---------------------------------------------------------------------------
# half-line realization (t = 0, x < 0)


def _int_exp(beta, L):
    """int_0^L exp(-i beta v) dv, stable for small beta."""
    z = -1j * np.asarray(beta, complex) * L
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    return L * np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


class HalfLineHankel:
    """H(a xi_x - principal parts of a xi_x in C+) with xi_x(k) = exp(2ikx), x < 0.

    ``poles`` and ``residues`` describe every pole of the decaying rational
    function a.  For x >= 0 the operator is zero.
    """

    def __init__(self, poles: Sequence[complex], residues: Sequence[complex], x: float,
                 n: int = 256):
        self.poles = np.asarray(poles, complex)
        self.res = np.asarray(residues, complex)
        self.x = float(x)
        self.L = max(0.0, -2.0 * self.x)
        self.n = int(n)
        self.up = self.poles.imag > 0
        if self.L > 0:
            self._setup()

    def _setup(self):
        L, n = self.L, self.n
        g, W = leggauss(n)
        self.gam = L * (g + 1) / 2
        self.w = L * W / 2
        S = self.gam[:, None] + self.gam[None, :]
        inside = S < L
        T = np.zeros((n, n), complex)
        for p, r in zip(self.poles[~self.up], self.res[~self.up]):
            T += np.where(inside, -1j * r * np.exp(1j * p * np.minimum(S - L, 0)), 0)
        pu, ru = self.poles[self.up], self.res[self.up]
        # C_p e^{ip(gamma+alpha)} with C_p = -i r e^{-ipL}, split off
        self.logC = np.log(-1j * ru) - 1j * pu * L
        self.Cinv = np.exp(1j * pu * L) / (-1j * ru)
        for p, r in zip(pu, ru):
            # beyond the cut the rank-one piece is removed again; bounded there
            T -= np.where(inside, 0, -1j * r * np.exp(1j * p * (np.maximum(S, L) - L)))
        self.U = np.exp(1j * pu[None, :] * self.gam[:, None])
        self.V = self.U * self.w[:, None]
        A = np.eye(n) + T * self.w[None, :]
        self._lu = lu_factor(A, check_finite=False)
        AU = lu_solve(self._lu, self.U, check_finite=False)
        self.AU = AU
        self.M = np.diag(self.Cinv) + self.V.T @ AU

    def logdet(self, estimate: bool = True) -> LogDet:
        if self.L == 0:
            return LogDet(0j, 0, 0.0)
        lu, piv = self._lu
        d = np.diag(lu)
        sign_m, lab_m = np.linalg.slogdet(self.M)
        swaps = int(np.sum(piv != np.arange(len(piv))))
        val = (np.log(d).sum() + 1j * np.pi * swaps + lab_m + np.log(sign_m) + self.logC.sum())
        val = complex(val.real, (val.imag + np.pi) % (2 * np.pi) - np.pi)
        ld = LogDet(val, self.n)
        if estimate:
            coarse = HalfLineHankel(self.poles, self.res, self.x, self.n // 2).logdet(False)
            ld.est_error = float(abs(coarse.value - val))
        return ld

    def _khat(self, m: float):
        """Fourier image of K_m on the nodes, split as (bounded part, upper coefficients)."""
        L, gam = self.L, self.gam
        rem = np.zeros(self.n, complex)
        beta = []
        for p, r, up in zip(self.poles, self.res, self.up):
            rem += -r / (p - m) * np.exp(-1j * m * (L - gam))
            if up:
                beta.append(r * np.exp(-1j * p * L) / (p - m))
            else:
                rem += r / (p - m) * np.exp(1j * p * (gam - L))
        return rem, np.array(beta, complex)

    def resolvent_smooth(self, coeffs: Sequence[tuple], at: float = 1.0) -> complex:
        """((I + H)^{-1} sum_j coef_j K_{m_j})(at) for real ``at``."""
        if self.L == 0:
            return 0j
        rem = np.zeros(self.n, complex)
        beta = np.zeros(int(self.up.sum()), complex)
        for m, coef in coeffs:
            r, b = self._khat(m)
            rem += coef * r
            beta += coef * b
        y0 = lu_solve(self._lu, rem, check_finite=False)
        corr = np.linalg.solve(self.M, self.V.T @ y0 - self.Cinv * beta)
        y = y0 - self.AU @ corr
        return complex(np.sum(self.w * y * np.exp(1j * at * self.gam)))
