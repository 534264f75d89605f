"""Scattering data of the Wigner-von Neumann potential Q and its
short-range approximations.

All rational functions are stored in factored form (constant, zeros,
poles), so residues come out analytically and removable singularities
are cancelled before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class PoleError(ZeroDivisionError):
    """Evaluation requested at (or numerically on top of) a pole."""


class EmbeddedEigenvalueError(PoleError):
    """The m-function was evaluated at its pole lambda = 1."""


class NonSimplePoleError(ValueError):
    """Circle quadrature detected a pole of order larger than one."""


def P(k):
    """The cubic k^3 - k."""
    return k**3 - k


@dataclass(frozen=True)
class Params:
    rho: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValueError(f"rho must be positive, got {self.rho!r}")


@dataclass(frozen=True)
class BoundState:
    kappa: float
    c: float


@dataclass(frozen=True)
class Rational:
    """const * prod(k - zeros) / prod(k - poles), all poles simple."""

    const: complex
    zeros: np.ndarray
    poles: np.ndarray

    def __call__(self, k):
        k = np.asarray(k, dtype=complex)
        num = np.full(k.shape, complex(self.const))
        for z in self.zeros:
            num = num * (k - z)
        den = np.ones(k.shape, dtype=complex)
        for p in self.poles:
            den = den * (k - p)
        if len(self.poles):
            dist = np.min(np.abs(k[..., None] - self.poles), axis=-1)
            if np.any(dist <= 1e-14 * (1 + np.abs(k))):
                raise PoleError("rational function evaluated at a pole")
        out = num / den
        return out if out.ndim else complex(out)

    def residue(self, pole):
        j = int(np.argmin(np.abs(self.poles - pole)))
        if abs(self.poles[j] - pole) > 1e-9 * (1 + abs(pole)):
            raise ValueError(f"{pole} is not a pole")
        p = self.poles[j]
        others = np.delete(self.poles, j)
        return complex(self.const * np.prod(p - self.zeros) / np.prod(p - others))

    def upper_poles(self):
        return self.poles[self.poles.imag > 0]


def _monotone_cubic_root(target: float) -> float:
    """Real root of s^3 + s = target (unique, the map is increasing)."""
    if target == 0:
        return 0.0
    hi = max(1.0, abs(target) ** (1 / 3)) + 1.0
    s = brentq(lambda s: s**3 + s - target, -hi, hi, xtol=1e-15)
    for _ in range(2):
        s -= (s**3 + s - target) / (3 * s**2 + 1)
    return float(s)


def solve_kappa(params: Params) -> BoundState:
    kappa = _monotone_cubic_root(2 * params.rho)
    return BoundState(kappa=kappa, c=2 * params.rho / (3 * kappa**2 + 1))


def reflection_poles(params: Params) -> np.ndarray:
    """Roots of P(k) + 2i rho: i*kappa first, then the two lower roots.

    The lower pair satisfies r1 + r2 = -i kappa and r1 r2 = -2 rho / kappa.
    """
    kap = solve_kappa(params).kappa
    disc = np.sqrt(complex(8 * params.rho / kap - kap**2))
    return np.array([1j * kap, (-1j * kap + disc) / 2, (-1j * kap - disc) / 2])


def _check_pole(den, k):
    if np.any(np.abs(den) <= 1e-14 * (1 + np.abs(k) ** 3)):
        raise PoleError("evaluation at a root of P(k) + 2i rho")


def transmission(k, params: Params):
    k = np.asarray(k, dtype=complex)
    den = P(k) + 2j * params.rho
    _check_pole(den, k)
    out = P(k) / den
    return out if out.ndim else complex(out)


def reflection(k, params: Params):
    k = np.asarray(k, dtype=complex)
    den = P(k) + 2j * params.rho
    _check_pole(den, k)
    out = -2j * params.rho / den
    return out if out.ndim else complex(out)


left_reflection = reflection


def reflection_rational(params: Params) -> Rational:
    return Rational(-2j * params.rho, np.zeros(0, complex), reflection_poles(params))


def transmission_rational(params: Params) -> Rational:
    return Rational(1.0, np.array([0.0, 1.0, -1.0], complex), reflection_poles(params))


def sqrt_upper(lam):
    """Square root with Im >= 0 (maps the upper half-plane into itself)."""
    s = np.sqrt(np.asarray(lam, dtype=complex))
    return np.where(s.imag < 0, -s, s)


def m_function(lam, params: Params):
    """Herglotz function m(lambda) = i sqrt(lambda) + 2 rho / (1 - lambda)."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(np.abs(1 - lam) < 1e-14):
        raise EmbeddedEigenvalueError("m has a pole at the embedded eigenvalue lambda = 1")
    out = 1j * sqrt_upper(lam) + 2 * params.rho / (1 - lam)
    return out if out.ndim else complex(out)


def m_of_k(k, params: Params):
    """m(k^2) on the k-plane, using sqrt(k^2) = k for Im k >= 0.

    On the real line this is the boundary value from the correct side for
    both signs of k.
    """
    k = np.asarray(k, dtype=complex)
    if np.any(np.abs(1 - k**2) < 1e-14):
        raise EmbeddedEigenvalueError("m has a pole at the embedded eigenvalue lambda = 1")
    out = 1j * k + 2 * params.rho / (1 - k**2)
    return out if out.ndim else complex(out)


def tau0(x, params: Params):
    """1 + rho|x| - (rho/2) sin 2|x|, strictly positive for rho > 0."""
    ax = np.abs(x)
    return 1 + params.rho * ax - 0.5 * params.rho * np.sin(2 * ax)


def jost(x, k, params: Params):
    """Jost solution f_+ (x >= 0) or f_- (x <= 0) in closed form."""
    k = np.asarray(k, dtype=complex)
    if np.any(np.abs(k - 1) < 1e-14) or np.any(np.abs(k + 1) < 1e-14):
        raise PoleError("Jost formula is indeterminate at k = +-1")
    x = np.asarray(x, dtype=float)
    sgn = np.where(x >= 0, 1.0, -1.0)
    frac = params.rho * np.sin(x) / tau0(x, params)
    bracket = np.exp(1j * sgn * x) / (k + 1) - np.exp(-1j * sgn * x) / (k - 1)
    out = (1 + sgn * bracket * frac) * np.exp(1j * sgn * k * x)
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# short-range approximation family


@dataclass(frozen=True)
class ApproxFamily:
    rho: float
    eps: float
    a: float
    mu: complex
    nu: float
    z: tuple  # (z_-1, z_0, z_1)
    kappa_plus: float
    kappa_minus: float
    c_plus: float
    c_minus: float
    T: Rational = field(repr=False)
    R: Rational = field(repr=False)

    @property
    def params(self) -> Params:
        return Params(self.rho)


def _newton_cubic(eps: float, seed: complex) -> complex:
    k = complex(seed)
    for _ in range(60):
        step = (k**3 - k + 1j * eps) / (3 * k**2 - 1)
        k -= step
        if abs(step) < 1e-16 * (1 + abs(k)):
            break
    return k


def approx_family(params: Params, eps: float) -> ApproxFamily:
    rho = params.rho
    if not (0 < eps < rho):
        raise ValueError(f"need 0 < eps < rho, got eps={eps}, rho={rho}")
    a = float(np.sqrt(1 - (eps / rho) ** 2))
    mu = _newton_cubic(eps, 1 - 0.5j * eps)
    nu = _monotone_cubic_root(eps)
    z = (-mu, 1j * nu, np.conj(mu))
    kp = _monotone_cubic_root(rho * (1 + a))
    km = _monotone_cubic_root(rho * (1 - a))

    def cubic_roots(s, kap):
        # roots of P(k) + i s with i*kap the upper one
        disc = np.sqrt(complex(4 * s / kap - kap**2))
        return [1j * kap, (-1j * kap + disc) / 2, (-1j * kap - disc) / 2]

    den_roots = np.array(cubic_roots(rho * (1 + a), kp) + cubic_roots(rho * (1 - a), km))
    # (P + i eps)^2 / b_0^2 with (k - z_0)^2 cancelled
    t_zeros = np.array([mu, mu, -np.conj(mu), -np.conj(mu), -1j * nu, -1j * nu])
    T = Rational(1.0, t_zeros, den_roots)
    zc = np.conj(np.array(z))
    R = Rational(
        -2j * a * rho,
        np.concatenate([[0.0, 1.0, -1.0], zc]).astype(complex),
        np.concatenate([den_roots, np.array(z)]),
    )
    c_plus = (-1j * T.residue(1j * kp)).real
    c_minus = (1j * T.residue(1j * km)).real
    return ApproxFamily(rho, eps, a, mu, nu, z, kp, km, c_plus, c_minus, T, R)


def transmission_eps(k, family: ApproxFamily):
    return family.T(k)


def reflection_eps(k, family: ApproxFamily):
    return family.R(k)


def blaschke_eps(k, family: ApproxFamily):
    k = np.asarray(k, dtype=complex)
    out = np.ones(k.shape, complex)
    for zn in family.z:
        out = out * (k - zn) / (k - np.conj(zn))
    return out


# ---------------------------------------------------------------------------


def residue(f, pole: complex, radius: float = 1e-3, nodes: int = 64) -> complex:
    """Residue of f at a simple pole.

    Uses ``f.residue`` when the evaluator knows its factorization, else
    trapezoidal quadrature on a circle.
    """
    if hasattr(f, "residue"):
        return f.residue(pole)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    dz = radius * np.exp(1j * theta)
    vals = np.asarray(f(pole + dz), dtype=complex)
    a1 = np.mean(vals * dz)
    a2 = np.mean(vals * dz**2)
    # a2 is the 1/(k-p)^2 coefficient; it vanishes for a simple pole
    if abs(a2) > 1e-9 * radius * np.max(np.abs(vals)):
        raise NonSimplePoleError(f"pole at {pole} is not simple")
    return complex(a1)
