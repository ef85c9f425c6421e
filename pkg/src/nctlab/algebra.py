"""Exact arithmetic in the smooth noncommutative torus.

Elements are finite, normal-ordered Fourier series sum a_{mn} U^m V^n where
the two unitary generators satisfy V U = exp(2 pi i theta) U V.  Every element
is stored with U-powers to the left of V-powers; products re-normalize through
the commutation phase.  Coefficients below EPS_DROP are pruned, so supports
stay finite and equality is testable coefficientwise.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi

# Coefficients with modulus below this are absent from the map.
EPS_DROP = 1e-15

# Default l1 tail tolerance for truncated exponential series.
EXP_TAIL_TOL = 1e-14

SELFADJOINT_TOL = 1e-12


class NonSelfAdjointInput(ValueError):
    """Raised when an operation requires a selfadjoint element."""


class SeriesDivergence(RuntimeError):
    """Raised when a truncated series cannot meet its tail bound."""


@dataclass(frozen=True)
class AlgebraParams:
    """Deformation parameter theta and complex modulus tau (Im tau > 0).

    theta is stored exactly as given; no reduction mod 1 is performed.
    """

    theta: float
    tau: complex = 1j

    def __post_init__(self):
        if not complex(self.tau).imag > 0:
            raise ValueError(f"tau must have positive imaginary part, got {self.tau}")

    @property
    def phase(self) -> complex:
        """exp(2 pi i theta), the V U reordering phase."""
        return cmath.exp(1j * TWO_PI * self.theta)


def _pruned(coeffs: dict) -> dict:
    return {k: complex(v) for k, v in coeffs.items() if abs(v) >= EPS_DROP}


@dataclass(frozen=True)
class AlgebraElement:
    """Finite-support normal-ordered series sum a_{mn} U^m V^n.

    The coefficient map is keyed by integer lattice points (m, n).  Instances
    are immutable after construction; all operations are pure functions.
    """

    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _pruned(self.coeffs))

    @property
    def band(self) -> int:
        """Smallest B with support contained in [-B, B]^2 (0 for zero)."""
        if not self.coeffs:
            return 0
        return max(max(abs(m), abs(n)) for (m, n) in self.coeffs)

    def band_at_tol(self, tol: float) -> int:
        """Smallest B whose outside-l1 coefficient mass is <= tol.

        This is the effective band used for margin bookkeeping: exponentials
        have factorially decaying tails, so the band relevant to an identity
        asserted at tolerance tol is much smaller than the support band.
        """
        if not self.coeffs:
            return 0
        by_radius: dict[int, float] = {}
        for (m, n), c in self.coeffs.items():
            r = max(abs(m), abs(n))
            by_radius[r] = by_radius.get(r, 0.0) + abs(c)
        radii = sorted(by_radius, reverse=True)
        tail = 0.0
        band = self.band
        for r in radii:
            tail += by_radius[r]
            if tail > tol:
                return r
            band = r - 1
        return max(band, 0)

    def coeff(self, m: int, n: int) -> complex:
        return self.coeffs.get((m, n), 0.0 + 0.0j)

    def l1(self) -> float:
        return sum(abs(c) for c in self.coeffs.values())

    def sup_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return AlgebraElement(out)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return self + other.scale(-1.0)

    def scale(self, z: complex) -> "AlgebraElement":
        return AlgebraElement({k: z * v for k, v in self.coeffs.items()})

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())


def monomial(m: int, n: int, coeff: complex = 1.0) -> AlgebraElement:
    return AlgebraElement({(int(m), int(n)): complex(coeff)})


def one() -> AlgebraElement:
    return monomial(0, 0)


def zero() -> AlgebraElement:
    return AlgebraElement({})


def gen_u() -> AlgebraElement:
    return monomial(1, 0)


def gen_v() -> AlgebraElement:
    return monomial(0, 1)


def multiply(a: AlgebraElement, b: AlgebraElement, params: AlgebraParams) -> AlgebraElement:
    """Normal-ordered product.

    Monomial rule: (U^p V^q)(U^r V^s) = exp(2 pi i theta q r) U^{p+r} V^{q+s}.
    Band of the result is at most band(a) + band(b); growth is the caller's
    responsibility.  Large supports take a vectorized path.
    """
    th = params.theta
    na, nb = len(a.coeffs), len(b.coeffs)
    if na * nb <= 4096:
        out: dict = {}
        for (p, q), ca in a.coeffs.items():
            for (r, s), cb in b.coeffs.items():
                phase = cmath.exp(1j * TWO_PI * th * q * r)
                key = (p + r, q + s)
                out[key] = out.get(key, 0.0) + ca * cb * phase
        return AlgebraElement(out)
    return _multiply_vectorized(a, b, th)


def _multiply_vectorized(a: AlgebraElement, b: AlgebraElement, theta: float) -> AlgebraElement:
    import numpy as np

    ka = np.array(list(a.coeffs.keys()), dtype=np.int64)
    va = np.array(list(a.coeffs.values()), dtype=complex)
    kb = np.array(list(b.coeffs.keys()), dtype=np.int64)
    vb = np.array(list(b.coeffs.values()), dtype=complex)
    tm = ka[:, 0:1] + kb[None, :, 0]
    tn = ka[:, 1:2] + kb[None, :, 1]
    phase = np.exp(1j * TWO_PI * theta * np.outer(ka[:, 1], kb[:, 0]))
    vals = (va[:, None] * vb[None, :]) * phase
    m0, m1 = int(tm.min()), int(tm.max())
    n0, n1 = int(tn.min()), int(tn.max())
    width = n1 - n0 + 1
    idx = ((tm - m0) * width + (tn - n0)).ravel()
    size = (m1 - m0 + 1) * width
    acc = np.bincount(idx, weights=vals.real.ravel(), minlength=size) + \
        1j * np.bincount(idx, weights=vals.imag.ravel(), minlength=size)
    nz = np.nonzero(np.abs(acc) >= EPS_DROP)[0]
    out = {(int(i // width) + m0, int(i % width) + n0): complex(acc[i]) for i in nz}
    return AlgebraElement(out)


def multiply_many(factors, params: AlgebraParams) -> AlgebraElement:
    acc = one()
    for f in factors:
        acc = multiply(acc, f, params)
    return acc


def star(a: AlgebraElement, params: AlgebraParams) -> AlgebraElement:
    """Adjoint: (U^m V^n)* = exp(2 pi i theta m n) U^{-m} V^{-n}, antilinear."""
    out: dict = {}
    th = params.theta
    for (m, n), c in a.coeffs.items():
        phase = cmath.exp(1j * TWO_PI * th * m * n)
        out[(-m, -n)] = out.get((-m, -n), 0.0) + c.conjugate() * phase
    return AlgebraElement(out)


def trace_phi0(a: AlgebraElement) -> complex:
    """The unique normalized trace: a -> a_{00}."""
    return a.coeff(0, 0)


def derivation(a: AlgebraElement, which: str, params: AlgebraParams) -> AlgebraElement:
    """Canonical derivations.

    delta1 multiplies a_{mn} by m, delta2 by n, and delta (the holomorphic
    combination delta1 + conj(tau) delta2) by m + conj(tau) n.
    """
    if which == "delta1":
        mult = lambda m, n: m
    elif which == "delta2":
        mult = lambda m, n: n
    elif which == "delta":
        tbar = complex(params.tau).conjugate()
        mult = lambda m, n: m + tbar * n
    else:
        raise ValueError(f"unknown derivation {which!r}")
    return AlgebraElement({(m, n): mult(m, n) * c for (m, n), c in a.coeffs.items()})


def selfadjoint_defect(h: AlgebraElement, params: AlgebraParams) -> float:
    return (h - star(h, params)).sup_coeff()


def exp_selfadjoint(
    h: AlgebraElement,
    scale: float,
    params: AlgebraParams,
    band_cap: int | None = None,
    tail_tol: float = EXP_TAIL_TOL,
) -> AlgebraElement:
    """Truncated power series of exp(scale * h) for selfadjoint h.

    The series stops once the remaining l1 tail, bounded by the factorial
    estimate ||x||^{J+1}/(J+1)! * e^{||x||} with x = scale*h, falls below
    tail_tol.  If band_cap is given and reaching the tail bound would require
    terms of larger band, SeriesDivergence is raised.  With band_cap=None the
    band grows as needed (coefficient pruning keeps the support finite); this
    is the default because the factorial bound typically needs J ~ 15-20
    terms even for small ||h||.
    """
    if selfadjoint_defect(h, params) > SELFADJOINT_TOL:
        raise NonSelfAdjointInput(
            f"exp input not selfadjoint within {SELFADJOINT_TOL}"
        )
    x = h.scale(scale)
    norm = x.l1()
    hband = max(h.band, 1)
    term = one()
    acc = one()
    j = 0
    # factorial tail bound: sum_{k>J} norm^k/k! <= norm^{J+1}/(J+1)! e^norm
    boost = math.exp(min(norm, 50.0))
    bound = norm * boost
    fact = 1.0
    while bound > tail_tol:
        j += 1
        if band_cap is not None and j * hband > band_cap:
            raise SeriesDivergence(
                f"band cap {band_cap} reached at term {j} with tail bound {bound:.3e}"
            )
        term = multiply(term, x, params).scale(1.0 / j)
        acc = acc + term
        fact *= j + 1
        bound = norm ** (j + 1) / fact * boost
        if j > 200:
            raise SeriesDivergence("exp series failed to converge in 200 terms")
    return acc


class WeylFactor:
    """Positive invertible k = exp(h) for a banded selfadjoint generator h.

    Carrying the generator is what makes all real powers k^p = exp(p*h)
    constructive (inverse, square roots, k^{-2} for conformal weights).
    Powers are memoized; instances are immutable in practice.
    """

    def __init__(self, h: AlgebraElement, params: AlgebraParams,
                 band_cap: int | None = None, tail_tol: float = EXP_TAIL_TOL):
        if selfadjoint_defect(h, params) > SELFADJOINT_TOL:
            raise NonSelfAdjointInput("Weyl generator must be selfadjoint")
        self.h = h
        self.params = params
        self.band_cap = band_cap
        self.tail_tol = tail_tol
        self._powers: dict[float, AlgebraElement] = {}

    def power(self, p: float) -> AlgebraElement:
        """k^p = exp(p*h)."""
        p = float(p)
        if p not in self._powers:
            if p == 0.0:
                self._powers[p] = one()
            else:
                self._powers[p] = exp_selfadjoint(
                    self.h, p, self.params,
                    band_cap=self.band_cap, tail_tol=self.tail_tol,
                )
        return self._powers[p]

    @property
    def k(self) -> AlgebraElement:
        return self.power(1.0)

    def is_trivial(self, tol: float = 1e-14) -> bool:
        return (self.h.is_zero(tol))

    def conjugate(self, a: AlgebraElement, exponent: float = 1.0) -> AlgebraElement:
        """k^exponent a k^{-exponent}."""
        p = self.params
        return multiply(multiply(self.power(exponent), a, p), self.power(-exponent), p)


def conformal_weight(a: AlgebraElement, k: WeylFactor) -> complex:
    """The weight phi(a) = phi0(a k^{-2}) attached to the Weyl factor k."""
    km2 = k.power(-2.0)
    return trace_phi0(multiply(a, km2, k.params))


def ribbon_conjugate(a: AlgebraElement, k: WeylFactor) -> AlgebraElement:
    """Square-root conjugation k^{1/2} a k^{-1/2} (half step of a -> k a k^{-1})."""
    return k.conjugate(a, 0.5)


def clip_element(a: AlgebraElement, band: int) -> tuple[AlgebraElement, float]:
    """Drop coefficients outside [-band, band]^2, returning the dropped mass.

    Window compressions require banded input; the clipped l1 mass is the
    structural error the caller tracks against its margin budget.
    """
    keep, dropped = {}, 0.0
    for (m, n), c in a.coeffs.items():
        if max(abs(m), abs(n)) <= band:
            keep[(m, n)] = c
        else:
            dropped += abs(c)
    return AlgebraElement(keep), dropped


def random_element(rng, band: int, scale: float = 1.0) -> AlgebraElement:
    """Dense random element supported on [-band, band]^2 (test helper)."""
    out = {}
    for m in range(-band, band + 1):
        for n in range(-band, band + 1):
            out[(m, n)] = scale * complex(rng.standard_normal(), rng.standard_normal())
    return AlgebraElement(out)


def random_selfadjoint(rng, band: int, params: AlgebraParams, scale: float = 1.0) -> AlgebraElement:
    a = random_element(rng, band, scale)
    return (a + star(a, params)).scale(0.5)


def element_to_json(a: AlgebraElement, params: AlgebraParams) -> dict:
    """JSON form {theta, tau:[re,im], coeffs:[[m,n,re,im],...]} sorted by (m,n)."""
    coeffs = [
        [m, n, a.coeffs[(m, n)].real, a.coeffs[(m, n)].imag]
        for (m, n) in sorted(a.coeffs)
    ]
    tau = complex(params.tau)
    return {"theta": params.theta, "tau": [tau.real, tau.imag], "coeffs": coeffs}


def element_from_json(obj: dict) -> tuple[AlgebraElement, AlgebraParams]:
    params = AlgebraParams(theta=obj["theta"], tau=complex(obj["tau"][0], obj["tau"][1]))
    coeffs = {(int(m), int(n)): complex(re, im) for m, n, re, im in obj["coeffs"]}
    return AlgebraElement(coeffs), params
