"""Finitely generated projective modules over the noncommutative torus.

Idempotents are q x q matrices of algebra elements.  The bump-function
projection of trace theta supplies the nontrivial K-theory class for
0 < theta < 1; at theta = 0 that construction degenerates and a 2 x 2
Bott-type projection over the commutative torus takes its place.  Both are
sampled as banded Fourier series and polished by the cubic iteration
e <- 3e^2 - 2e^3, which is quadratically convergent once ||e^2 - e|| < 1/4.

The first-Chern trace formula provides the independent oracle for every
index computation downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import (
    AlgebraElement,
    AlgebraParams,
    WeylFactor,
    derivation,
    monomial,
    multiply,
    one,
    star,
    trace_phi0,
    zero,
)

POLISH_TOL = 1e-12
POLISH_MAX_ITER = 40
TRACE_TOL = 1e-6
CHERN_INT_TOL = 1e-6


class PolishDiverged(RuntimeError):
    """Raised when the idempotent polish fails to contract (band too small)."""


class NonIntegral(ValueError):
    """Raised when the Chern trace formula is not close to an integer."""


# ---------------------------------------------------------------------------
# matrix arithmetic over the algebra

def mat_mul(A, B, params: AlgebraParams):
    q = len(A)
    out = []
    for i in range(q):
        row = []
        for j in range(q):
            acc = zero()
            for l in range(q):
                acc = acc + multiply(A[i][l], B[l][j], params)
            row.append(acc)
        out.append(row)
    return out


def mat_add(A, B):
    return [[A[i][j] + B[i][j] for j in range(len(A))] for i in range(len(A))]


def mat_sub(A, B):
    return [[A[i][j] - B[i][j] for j in range(len(A))] for i in range(len(A))]


def mat_scale(A, z):
    return [[A[i][j].scale(z) for j in range(len(A))] for i in range(len(A))]


def mat_star(A, params: AlgebraParams):
    q = len(A)
    return [[star(A[j][i], params) for j in range(q)] for i in range(q)]


def mat_sup(A) -> float:
    return max(A[i][j].sup_coeff() for i in range(len(A)) for j in range(len(A)))


def mat_apply(A, fn):
    return [[fn(A[i][j]) for j in range(len(A))] for i in range(len(A))]


@dataclass
class Idempotent:
    """q x q idempotent over the algebra, acting by left or right
    multiplication depending on rep_side."""

    entries: list
    params: AlgebraParams
    rep_side: str = "left"

    @property
    def q(self) -> int:
        return len(self.entries)

    @property
    def band(self) -> int:
        return max(self.entries[i][j].band for i in range(self.q) for j in range(self.q))

    def idempotency_defect(self) -> float:
        return mat_sup(mat_sub(mat_mul(self.entries, self.entries, self.params), self.entries))

    def star_defect(self) -> float:
        return mat_sup(mat_sub(mat_star(self.entries, self.params), self.entries))

    def trace(self) -> complex:
        return sum(trace_phi0(self.entries[i][i]) for i in range(self.q))

    def with_entries(self, entries) -> "Idempotent":
        return Idempotent(entries, self.params, self.rep_side)

    def transposed_product_defect(self) -> float:
        """Idempotency in the opposite-algebra matrix convention.

        Right-module matrix idempotents over a noncommutative algebra must be
        idempotent for the transposed product; for q = 1 and for theta = 0
        this coincides with the ordinary check.
        """
        At = [[self.entries[j][i] for j in range(self.q)] for i in range(self.q)]
        prod = mat_mul(At, At, self.params)
        return mat_sup(mat_sub(prod, At))

    def to_json(self) -> dict:
        from .algebra import element_to_json
        return {
            "q": self.q,
            "rep_side": self.rep_side,
            "entries": [[element_to_json(self.entries[i][j], self.params)
                         for j in range(self.q)] for i in range(self.q)],
            "idempotency_defect": self.idempotency_defect(),
        }


def polish(e: Idempotent, tol: float = POLISH_TOL) -> Idempotent:
    """Iterate e <- 3e^2 - 2e^3 until ||e^2 - e|| <= tol.

    The iteration is quadratically convergent once the defect is below 1/4;
    divergence means the Fourier band of the seed was too small.
    """
    ent = e.entries
    p = e.params
    prev = math.inf
    for _ in range(POLISH_MAX_ITER):
        cur = e.with_entries(ent).idempotency_defect()
        if cur <= tol:
            return e.with_entries(ent)
        if cur >= prev and cur > 0.25:
            raise PolishDiverged(f"polish stalled at defect {cur:.3e}")
        prev = cur
        e2 = mat_mul(ent, ent, p)
        e3 = mat_mul(e2, ent, p)
        ent = mat_sub(mat_scale(e2, 3.0), mat_scale(e3, 2.0))
    final = e.with_entries(ent)
    if final.idempotency_defect() > tol:
        raise PolishDiverged("polish did not reach tolerance")
    return final


# ---------------------------------------------------------------------------
# smooth bump machinery

def _mollifier_ramp(t: np.ndarray) -> np.ndarray:
    """C-infinity ramp 0 -> 1 on [0, 1] with all derivatives flat at the ends."""
    def sigma(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    t = np.clip(t, 0.0, 1.0)
    s1 = sigma(t)
    s2 = sigma(1.0 - t)
    return s1 / (s1 + s2)


def _fourier_coeffs(values: np.ndarray, band: int) -> dict:
    """Fourier coefficients c_m, |m| <= band, of samples on a uniform grid."""
    n = values.size
    c = np.fft.fft(values) / n
    out = {}
    for m in range(-band, band + 1):
        out[m] = complex(c[m % n])
    return out


_PROJECTION_CACHE: dict = {}


def powers_rieffel(theta: float, band: int = 16, params: AlgebraParams | None = None,
                   samples: int = 8192, polish_tol: float = POLISH_TOL,
                   rep_side: str = "left") -> Idempotent:
    """Selfadjoint bump-function projection of trace theta in A_theta.

    p = f(U) + g(U) V + (g(U) V)* with f a smooth plateau of width ~theta and
    g = sqrt(f(1-f)) on the single ramp where f and its theta-translate sum
    to one.  Sampled to the requested Fourier band, then polished.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("powers_rieffel requires 0 < theta < 1")
    if params is None:
        params = AlgebraParams(theta=theta)
    key = ("pr", theta, band, params, samples, polish_tol, rep_side)
    if key in _PROJECTION_CACHE:
        return _PROJECTION_CACHE[key]
    delta = 0.95 * min(theta, 1.0 - theta)
    x = np.arange(samples) / samples

    f = np.zeros(samples)
    up = (x >= 0) & (x < delta)
    f[up] = _mollifier_ramp(x[up] / delta)
    plateau = (x >= delta) & (x < theta)
    f[plateau] = 1.0
    down = (x >= theta) & (x < theta + delta)
    f[down] = 1.0 - _mollifier_ramp((x[down] - theta) / delta)

    g = np.zeros(samples)
    g[up] = np.sqrt(np.maximum(f[up] * (1.0 - f[up]), 0.0))

    fc = _fourier_coeffs(f, band)
    gc = _fourier_coeffs(g, band)
    coeffs = {}
    for m, c in fc.items():
        if abs(c) > 0:
            coeffs[(m, 0)] = coeffs.get((m, 0), 0.0) + c
    for m, c in gc.items():
        if abs(c) > 0:
            coeffs[(m, 1)] = coeffs.get((m, 1), 0.0) + c
    seed = AlgebraElement(coeffs)
    elem = seed + star(AlgebraElement({k: v for k, v in seed.coeffs.items() if k[1] == 1}), params)
    # symmetrize the V^0 part so the seed is exactly selfadjoint
    elem = (elem + star(elem, params)).scale(0.5)
    e = Idempotent([[elem]], params, rep_side)
    e = polish(e, polish_tol)
    tr = e.trace()
    if abs(tr - theta) > TRACE_TOL:
        raise PolishDiverged(f"trace {tr} too far from theta={theta}")
    _PROJECTION_CACHE[key] = e
    return e


def bott_projection(band: int = 12, params: AlgebraParams | None = None,
                    samples: int = 8192, polish_tol: float = POLISH_TOL,
                    rep_side: str = "left") -> Idempotent:
    """Degree-one 2 x 2 projection over the commutative torus (theta = 0).

    [[f, g], [g*, 1-f]] with f a latitude profile in the V-direction and
    g = rho + U sigma a winding clutching function; |g|^2 = f(1-f) because
    rho and sigma have disjoint supports.
    """
    if params is None:
        params = AlgebraParams(theta=0.0)
    if params.theta != 0.0:
        raise ValueError("the Bott-type projection is the theta = 0 construction")
    key = ("bott", band, params, samples, polish_tol, rep_side)
    if key in _PROJECTION_CACHE:
        return _PROJECTION_CACHE[key]
    y = np.arange(samples) / samples
    f = np.where(y < 0.5, _mollifier_ramp(2 * y), _mollifier_ramp(2.0 - 2 * y))
    w = np.sqrt(np.maximum(f * (1.0 - f), 0.0))
    sig = np.where(y < 0.5, w, 0.0)
    rho = np.where(y >= 0.5, w, 0.0)

    fc = _fourier_coeffs(f, band)
    sc = _fourier_coeffs(sig, band)
    rc = _fourier_coeffs(rho, band)

    f_el = AlgebraElement({(0, n): c for n, c in fc.items()})
    g_el = AlgebraElement({(0, n): c for n, c in rc.items()}) + \
        AlgebraElement({(1, n): c for n, c in sc.items()})
    gs = star(g_el, params)
    entries = [[f_el, g_el], [gs, one() - f_el]]
    # exact selfadjointness of the seed
    st = mat_star(entries, params)
    entries = mat_scale(mat_add(entries, st), 0.5)
    e = Idempotent(entries, params, rep_side)
    e = polish(e, polish_tol)
    tr = e.trace()
    if abs(tr - 1.0) > TRACE_TOL:
        raise PolishDiverged(f"Bott trace {tr} not 1")
    _PROJECTION_CACHE[key] = e
    return e


def free_idempotent(q: int, params: AlgebraParams, rank: int | None = None,
                    rep_side: str = "left") -> Idempotent:
    """diag(1, ..., 1, 0, ..., 0) with `rank` ones (default q)."""
    rank = q if rank is None else rank
    ent = [[one() if (i == j and i < rank) else zero() for j in range(q)]
           for i in range(q)]
    return Idempotent(ent, params, rep_side)


def chern_number(e: Idempotent) -> float:
    """First Chern number via the curvature trace formula.

    c(e) = 2 pi i * phi0-trace of e (d1(e) d2(e) - d2(e) d1(e)) for the
    integer-eigenvalue derivations d1, d2.  Must land within 1e-6 of an
    integer, else NonIntegral.
    """
    p = e.params
    d1 = mat_apply(e.entries, lambda a: derivation(a, "delta1", p))
    d2 = mat_apply(e.entries, lambda a: derivation(a, "delta2", p))
    comm = mat_sub(mat_mul(d1, d2, p), mat_mul(d2, d1, p))
    prod = mat_mul(e.entries, comm, p)
    tr = sum(trace_phi0(prod[i][i]) for i in range(e.q))
    val = complex(2j * math.pi * tr)
    if abs(val.imag) > CHERN_INT_TOL or abs(val.real - round(val.real)) > CHERN_INT_TOL:
        raise NonIntegral(f"Chern value {val} is not near an integer")
    return float(val.real)


def sigma_translate(e: Idempotent, k: WeylFactor, exponent: float = 1.0) -> Idempotent:
    """Entrywise inner conjugation sigma(e) = k^exponent e k^{-exponent}."""
    ent = mat_apply(e.entries, lambda a: k.conjugate(a, exponent))
    return e.with_entries(ent)


def ribbon_selfadjoint(e: Idempotent, k: WeylFactor, exponent: float = 1.0) -> Idempotent:
    """Half-conjugated representative e_hat = k^{-exponent/2} e k^{exponent/2}.

    For selfadjoint e this makes sigma(e_hat)* = e_hat for the inner
    automorphism sigma(a) = k^exponent a k^{-exponent}.
    """
    ent = mat_apply(e.entries, lambda a: k.conjugate(a, -0.5 * exponent))
    return e.with_entries(ent)


def clip_to_band(e: Idempotent, band: int) -> tuple[Idempotent, float]:
    """Drop coefficients outside [-band, band]^2; returns the clipped mass.

    Compression into a window of radius N requires entries of band <= N; the
    clipped tail is a structural error tracked by the caller.
    """
    clipped = 0.0

    def clip(a: AlgebraElement) -> AlgebraElement:
        nonlocal clipped
        keep, drop = {}, 0.0
        for (m, n), c in a.coeffs.items():
            if max(abs(m), abs(n)) <= band:
                keep[(m, n)] = c
            else:
                drop += abs(c)
        clipped = max(clipped, drop)
        return AlgebraElement(keep)

    out = mat_apply(e.entries, clip)
    return e.with_entries(out), clipped
