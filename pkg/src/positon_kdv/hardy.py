"""Hardy-space primitives on the upper half-plane.

Inner products are normalized so that <f, g> = (1/2pi) * int f conj(g) dx;
with this choice k_lambda(z) = i / (z - conj(lambda)) reproduces point
values, <f, k_lambda> = f(lambda).

H^2 functions are passed around as plain callables accepting complex
numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .scattering import residue


class SymmetryError(ValueError):
    """Symbol violates phi(-conj z) = conj phi(z); H(phi) would not be selfadjoint."""


@dataclass(frozen=True)
class Kernel:
    lam: complex

    def __call__(self, z):
        return 1j / (np.asarray(z, dtype=complex) - np.conj(self.lam))

    def norm(self) -> float:
        return 1.0 / np.sqrt(2.0 * self.lam.imag)


def kernel_inner(a: Kernel, b: Kernel) -> complex:
    """<k_a, k_b> = k_a(b)."""
    if not b.lam.imag > 0:
        raise ValueError("second kernel must sit in the open upper half-plane")
    return complex(a(b.lam))


@dataclass(frozen=True)
class Blaschke:
    zeros: tuple

    def __post_init__(self):
        z = np.asarray(self.zeros, dtype=complex)
        if np.any(z.imag <= 0):
            raise ValueError("Blaschke zeros must lie in the open upper half-plane")
        d = np.abs(z[:, None] - z[None, :]) + np.eye(len(z))
        if np.any(d < 1e-12):
            raise ValueError("Blaschke zeros must be simple")
        object.__setattr__(self, "zeros", tuple(complex(w) for w in z))

    def factor(self, n: int, z):
        zn = self.zeros[n]
        z = np.asarray(z, dtype=complex)
        return (z - zn) / (z - np.conj(zn))

    def partial(self, n: int, z, skip=()):
        """B_n = B / b_n, optionally dropping further factors."""
        z = np.asarray(z, dtype=complex)
        out = np.ones(z.shape, complex)
        for j in range(len(self.zeros)):
            if j != n and j not in skip:
                out = out * self.factor(j, z)
        return out

    def __call__(self, z):
        return self.partial(None, z)


def blaschke_eval(B: Blaschke, z):
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z[..., None] - np.conj(np.asarray(B.zeros))) < 1e-14):
        raise ZeroDivisionError("Blaschke product evaluated at a conjugate zero")
    out = B(z)
    return out if out.ndim else complex(out)


def _biorth_const(B: Blaschke, n: int) -> complex:
    zn = B.zeros[n]
    return 2 * zn.imag / complex(B.partial(n, zn))


def biorth_basis(B: Blaschke) -> list:
    """Evaluators of k_perp_n = (2 Im z_n / B_n(z_n)) B_n k_{z_n}."""
    basis = []
    for n, zn in enumerate(B.zeros):
        const = _biorth_const(B, n)
        kn = Kernel(zn)
        basis.append(lambda z, n=n, const=const, kn=kn: const * B.partial(n, z) * kn(z))
    return basis


def inner_biorth(f: Callable, B: Blaschke, m: int) -> complex:
    """<f, k_perp_m> for f in H^2, by residues of f conj(k_perp_m) in C+.

    On the real line conj(k_perp_m) = conj(c_m) (-i) / (B_m(x) (x - z_m)),
    whose poles in C+ sit at the zeros of B; only values of f there enter.
    """
    zs = B.zeros
    zm = zs[m]
    total = complex(f(np.array([zm]))[0]) / complex(B.partial(m, zm))
    for j, zj in enumerate(zs):
        if j == m:
            continue
        rest = complex(B.partial(m, zj, skip=(j,)))
        total += complex(f(np.array([zj]))[0]) * 2j * zj.imag / (rest * (zj - zm))
    return np.conj(_biorth_const(B, m)) * total


def model_projection_matrix(B: Blaschke, A: Callable) -> np.ndarray:
    """Matrix of P_B A P_B in the basis (k_{z_n}); entry [m, n] = <A k_{z_n}, k_perp_m>.

    ``A`` maps an H^2 evaluator to an H^2 evaluator.
    """
    r = len(B.zeros)
    M = np.zeros((r, r), complex)
    for n, zn in enumerate(B.zeros):
        g = A(Kernel(zn))
        for m in range(r):
            M[m, n] = inner_biorth(g, B, m)
    return M


def rank_one_hankel(z: complex, f: Callable) -> Callable:
    """H(1/(k - z)) f = i f(z) k_{-conj z} for Im z > 0."""
    fz = complex(f(np.array([z]))[0])
    kz = Kernel(-np.conj(z))
    return lambda s: 1j * fz * kz(s)


def riesz_minus_rational(g: Callable, upper_poles) -> Callable:
    """P_- of a decaying rational g: the sum of its principal parts in C+."""
    parts = [(p, residue(g, p)) for p in upper_poles]
    return lambda w: sum(r / (np.asarray(w, dtype=complex) - p) for p, r in parts)


def hankel_apply_rational(phi: Callable, phi_upper_poles, f: Callable) -> Callable:
    """H(phi) f = J P_- (phi f) for rational phi and rational f in H^2."""
    pm = riesz_minus_rational(lambda k: phi(k) * f(k), phi_upper_poles)
    return lambda s: pm(-np.asarray(s, dtype=complex))


# ---------------------------------------------------------------------------
# symbols and their splitting


def _zero_base(z, order=0):
    return np.zeros(np.shape(z), complex)


@dataclass(frozen=True)
class Symbol:
    """phi(k) = base(k) + sum_j b_j / (k - p_j).

    ``base(z, order)`` returns the order-th x-derivative of the meromorphic
    part; ``base_poles`` lists its poles in C+ as (p, (Res, d/dx Res,
    d2/dx2 Res)); ``terms`` lists the explicit simple fractions in the same
    format.  ``evaluator`` may override the naive sum with a numerically
    stable form (e.g. with a removable pole cancelled).
    """

    base: Callable = _zero_base
    base_poles: tuple = ()
    terms: tuple = ()
    evaluator: Callable | None = field(default=None, compare=False)

    def __call__(self, z):
        if self.evaluator is not None:
            return self.evaluator(z)
        z = np.asarray(z, dtype=complex)
        out = self.base(z, 0)
        for p, b in self.terms:
            out = out + b[0] / (z - p)
        return out


@dataclass(frozen=True)
class SymbolSplit:
    """Rational part (poles with residues and their x-derivatives) plus the
    contour-represented part Phi living on the line R + ih."""

    poles: tuple
    entire: Callable
    h: float

    def rational(self, w):
        w = np.asarray(w, dtype=complex)
        return sum((r[0] / (w - p) for p, r in self.poles), np.zeros(w.shape, complex))

    def entire_value(self, w, nodes, weights):
        """Phi(w) = -(1/2 pi i) int_{R+ih} base(z) / (z - w) dz, for Im w < h."""
        w = np.asarray(w, dtype=complex)
        f = self.entire(nodes, 0) * weights
        return -(f / (nodes - w[..., None])).sum(axis=-1) / (2j * np.pi)


_PROBES = np.array([0.37 + 0.5j, -1.3 + 0.21j, 2.1 + 1.7j, 0.05 + 3.0j, -4.2 + 0.9j])


def check_symmetry(phi: Callable, tol: float = 1e-10) -> float:
    a = np.asarray(phi(-np.conj(_PROBES)))
    b = np.conj(np.asarray(phi(_PROBES)))
    err = float(np.max(np.abs(a - b) / (1 + np.abs(b))))
    if err > tol:
        raise SymmetryError(f"phi(-conj z) != conj phi(z): relative defect {err:.3e}")
    return err


def _merge(entries, tol=1e-12):
    merged = []
    for p, r in entries:
        for i, (q, s) in enumerate(merged):
            if abs(p - q) <= tol * (1 + abs(p)):
                merged[i] = (q, tuple(a + b for a, b in zip(s, r)))
                break
        else:
            merged.append((p, tuple(r)))
    out = []
    for (p, r), scale in zip(merged, [_scale(p, entries) for p, _ in merged]):
        if abs(r[0]) > 1e-13 * scale:
            out.append((p, r))
    return tuple(out)


def _scale(p, entries):
    return max((abs(r[0]) for q, r in entries if abs(q - p) <= 1e-12 * (1 + abs(p))), default=0.0)


def split_symbol(phi: Symbol, h: float, check: bool = True) -> SymbolSplit:
    """Split phi for a contour at height h.

    Explicit fractions always go to the finite-rank part.  Poles of the base
    below the line go there too, with their residues; coincident entries are
    merged, and those that cancel (a removable singularity of phi) drop out.
    The contour carries the base alone.
    """
    if not h > 0:
        raise ValueError("contour height must be positive")
    if check:
        check_symmetry(phi)
    for p, _ in phi.base_poles:
        if abs(p.imag - h) < 1e-6:
            raise ValueError(f"contour at height {h} runs through a pole at {p}")
    entries = list(phi.terms) + [(p, r) for p, r in phi.base_poles if p.imag < h]
    return SymbolSplit(poles=_merge(entries), entire=phi.base, h=float(h))
