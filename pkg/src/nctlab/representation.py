"""Truncated matrix representations on the GNS spaces.

The Hilbert space H = H0 (+) H10 carries the monomial basis U^m V^n with
|m|, |n| <= N; the (1,0)-form space is identified with H0 basis-wise (the
trace property makes the identification isometric on form products, which is
checked in the tests).  Operators are compressed as P_N T P_N.  Identities
are asserted only on vectors supported in an inner margin window; boundary
truncation errors are structural, not numerical, and are excluded that way.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    TWO_PI,
    AlgebraElement,
    AlgebraParams,
    WeylFactor,
    multiply,
    star,
    trace_phi0,
)


class BandExceedsWindow(ValueError):
    """Raised when an element's band does not fit the truncation window."""


@dataclass(frozen=True)
class TruncationWindow:
    """Lattice window: basis = monomials with |m|, |n| <= n; margin <= n.

    Identities are asserted only on vectors supported in [-margin, margin]^2.
    """

    n: int
    margin: int = 0

    def __post_init__(self):
        if not (0 <= self.margin <= self.n):
            raise ValueError(f"margin must satisfy 0 <= margin <= {self.n}")

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    @property
    def dim(self) -> int:
        return self.side ** 2

    def index(self, m: int, n: int) -> int:
        return (m + self.n) * self.side + (n + self.n)

    def lattice(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays (M, N) of lattice coordinates in basis order."""
        r = np.arange(-self.n, self.n + 1)
        M, N = np.meshgrid(r, r, indexing="ij")
        return M.ravel(), N.ravel()

    def margin_mask(self, margin: int | None = None) -> np.ndarray:
        m = self.margin if margin is None else margin
        M, N = self.lattice()
        return (np.abs(M) <= m) & (np.abs(N) <= m)

    def with_margin(self, margin: int) -> "TruncationWindow":
        return TruncationWindow(self.n, margin)


@dataclass
class GradedMatrix:
    """Dense complex matrix with a +/- grading split of the basis.

    Indices [0, n_plus) are the + block (H0 side, possibly q components),
    the rest the - block.  parity is 'odd', 'even' or 'none' and is checked
    against the block structure at construction.
    """

    data: np.ndarray
    n_plus: int
    window: TruncationWindow
    q: int = 1
    parity: str = "none"

    GRADING_TOL = 1e-14

    def __post_init__(self):
        d = self.data
        if d.shape[0] != d.shape[1]:
            raise ValueError("graded matrices are square")
        scale = max(np.abs(d).max(), 1.0)
        p = self.n_plus
        if self.parity == "odd":
            if max(np.abs(d[:p, :p]).max(), np.abs(d[p:, p:]).max()) > self.GRADING_TOL * scale:
                raise ValueError("odd matrix has nonzero diagonal blocks")
        elif self.parity == "even":
            if max(np.abs(d[:p, p:]).max(), np.abs(d[p:, :p]).max()) > self.GRADING_TOL * scale:
                raise ValueError("even matrix has nonzero off-diagonal blocks")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def block(self, row: str, col: str) -> np.ndarray:
        p = self.n_plus
        sl = {"+": slice(0, p), "-": slice(p, None)}
        return self.data[sl[row], sl[col]]

    def grading_signs(self) -> np.ndarray:
        g = np.ones(self.dim)
        g[self.n_plus:] = -1.0
        return g

    def adjoint(self) -> "GradedMatrix":
        return GradedMatrix(self.data.conj().T, self.n_plus, self.window, self.q, self.parity)

    def __matmul__(self, other: "GradedMatrix") -> "GradedMatrix":
        par = {"eveneven": "even", "oddodd": "even",
               "evenodd": "odd", "oddeven": "odd"}.get(self.parity + other.parity, "none")
        return GradedMatrix(self.data @ other.data, self.n_plus, self.window, self.q, par)

    def __add__(self, other: "GradedMatrix") -> "GradedMatrix":
        par = self.parity if self.parity == other.parity else "none"
        return GradedMatrix(self.data + other.data, self.n_plus, self.window, self.q, par)

    def __sub__(self, other: "GradedMatrix") -> "GradedMatrix":
        par = self.parity if self.parity == other.parity else "none"
        return GradedMatrix(self.data - other.data, self.n_plus, self.window, self.q, par)

    def scale(self, z: complex) -> "GradedMatrix":
        return GradedMatrix(z * self.data, self.n_plus, self.window, self.q, self.parity)

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.data - self.data.conj().T).max())

    def margin_projector(self, margin: int | None = None) -> np.ndarray:
        """Diagonal 0/1 projector onto margin-supported vectors (all components)."""
        mask = self.window.margin_mask(margin)
        full = np.tile(mask, 2 * self.q)
        return full.astype(float)

    def margin_norm(self, margin: int | None = None) -> float:
        """Largest singular value of T restricted to margin-supported inputs."""
        mask = np.tile(self.window.margin_mask(margin), 2 * self.q)
        cols = self.data[:, mask]
        if cols.size == 0:
            return 0.0
        return float(np.linalg.norm(cols, 2))


def _mult_matrix_half(left: AlgebraElement | None, right: AlgebraElement | None,
                      w: TruncationWindow, params: AlgebraParams) -> np.ndarray:
    """Compressed matrix of xi -> a xi b on one half of H (monomial basis).

    Exact on vectors whose support keeps the product inside the window.
    """
    for x, name in ((left, "left"), (right, "right")):
        if x is not None and x.band > w.n:
            raise BandExceedsWindow(f"{name} factor band {x.band} exceeds window {w.n}")
    d = w.dim
    M, N = w.lattice()
    out = np.zeros((d, d), dtype=complex)
    lco = left.coeffs if left is not None else {(0, 0): 1.0 + 0.0j}
    rco = right.coeffs if right is not None else {(0, 0): 1.0 + 0.0j}
    th = params.theta
    side = w.side
    for (p, q), ca in lco.items():
        for (r, s), cb in rco.items():
            # (U^p V^q)(U^m V^n)(U^r V^s)
            #   = exp(2 pi i theta (q m + (q+n) r)) U^{p+m+r} V^{q+n+s}
            tm = M + p + r
            tn = N + q + s
            ok = (np.abs(tm) <= w.n) & (np.abs(tn) <= w.n)
            phase = np.exp(1j * TWO_PI * th * (q * M + (q + N) * r))
            rows = (tm[ok] + w.n) * side + (tn[ok] + w.n)
            cols = np.nonzero(ok)[0]
            out[rows, cols] += ca * cb * phase[ok]
    return out


def mult_matrix(w: TruncationWindow, params: AlgebraParams,
                left: AlgebraElement | None = None,
                right: AlgebraElement | None = None, q: int = 1) -> GradedMatrix:
    """Even graded matrix of xi -> a xi b, acting identically on both halves."""
    half = _mult_matrix_half(left, right, w, params)
    if q > 1:
        half = np.kron(np.eye(q), half)
    qd = half.shape[0]
    data = np.zeros((2 * qd, 2 * qd), dtype=complex)
    data[:qd, :qd] = half
    data[qd:, qd:] = half
    return GradedMatrix(data, qd, w, q, "even")


def left_mult_matrix(a: AlgebraElement, w: TruncationWindow, params: AlgebraParams,
                     q: int = 1) -> GradedMatrix:
    return mult_matrix(w, params, left=a, q=q)


def right_mult_matrix(a: AlgebraElement, w: TruncationWindow, params: AlgebraParams,
                      q: int = 1) -> GradedMatrix:
    return mult_matrix(w, params, right=a, q=q)


def dirac_symbol(w: TruncationWindow, params: AlgebraParams) -> np.ndarray:
    """Diagonal of the holomorphic derivation: m + conj(tau) n per lattice point."""
    M, N = w.lattice()
    return M + complex(params.tau).conjugate() * N


def build_dirac(w: TruncationWindow, params: AlgebraParams, q: int = 1) -> GradedMatrix:
    """Odd selfadjoint [[0, del*], [del, 0]] with del diagonal (m + conj(tau) n)."""
    sym = dirac_symbol(w, params)
    if q > 1:
        sym = np.tile(sym, q)
    qd = sym.size
    data = np.zeros((2 * qd, 2 * qd), dtype=complex)
    data[qd:, :qd] = np.diag(sym)
    data[:qd, qd:] = np.diag(sym.conjugate())
    return GradedMatrix(data, qd, w, q, "odd")


@dataclass(frozen=True)
class TwistSpec:
    """Pseudo-inner twisting data: positive factors k+ and k- and the side
    (left/right multiplication) through which they act.

    k+ and k- commute when drawn from commuting generators; the compressed
    omega blocks are Hermitian positive by construction.
    """

    k_plus: WeylFactor | None
    k_minus: WeylFactor | None
    side: str = "left"

    def commutation_defect(self, params: AlgebraParams) -> float:
        if self.k_plus is None or self.k_minus is None:
            return 0.0
        a, b = self.k_plus.k, self.k_minus.k
        return (multiply(a, b, params) - multiply(b, a, params)).sup_coeff()


def _omega_half(kф: WeylFactor | None, side: str, w: TruncationWindow,
                params: AlgebraParams, q: int, power: float = 1.0) -> np.ndarray:
    from .algebra import clip_element

    if kф is None or kф.is_trivial():
        return np.eye(q * w.dim, dtype=complex)
    el, _ = clip_element(kф.power(power), w.n)
    if side == "left":
        half = _mult_matrix_half(el, None, w, params)
    else:
        half = _mult_matrix_half(None, el, w, params)
    if q > 1:
        half = np.kron(np.eye(q), half)
    return half


def build_pseudo_inner(D: GradedMatrix, twist: TwistSpec, params: AlgebraParams) -> GradedMatrix:
    """omega D omega with omega = diag(omega+, omega-), omega+- the compressed
    multiplication operators of k+- (clipped to the window; clipping is a
    structural boundary error excluded by margins)."""
    w, q, qd = D.window, D.q, D.n_plus
    omega = np.zeros((2 * qd, 2 * qd), dtype=complex)
    omega[:qd, :qd] = _omega_half(twist.k_plus, twist.side, w, params, q)
    omega[qd:, qd:] = _omega_half(twist.k_minus, twist.side, w, params, q)
    data = omega @ D.data @ omega
    return GradedMatrix(data, qd, w, q, "odd")


def conformal_dirac(w: TruncationWindow, params: AlgebraParams, k: WeylFactor,
                    q: int = 1) -> GradedMatrix:
    """The conformal-weight model omega D omega with omega = diag(R_k, 1).

    This is the compressed window operator unitarily equivalent to the GNS
    Dirac operator of the weight phi(a) = phi0(a k^{-2}).
    """
    D = build_dirac(w, params, q)
    return build_pseudo_inner(D, TwistSpec(k_plus=k, k_minus=None, side="right"), params)


def twisted_commutator(D: GradedMatrix, a: AlgebraElement, sigma_a: AlgebraElement,
                       w: TruncationWindow, params: AlgebraParams,
                       side: str = "left") -> GradedMatrix:
    """D pi(a) - pi(sigma(a)) D with pi the chosen multiplication representation.

    The caller supplies sigma(a) (typically k a k^{-1} or k^{-1} a k); both
    bands must fit the window.
    """
    if side == "left":
        Pa = mult_matrix(w, params, left=a, q=D.q)
        Ps = mult_matrix(w, params, left=sigma_a, q=D.q)
    else:
        Pa = mult_matrix(w, params, right=a, q=D.q)
        Ps = mult_matrix(w, params, right=sigma_a, q=D.q)
    return GradedMatrix(D.data @ Pa.data - Ps.data @ D.data, D.n_plus, w, D.q, "odd")


def twisted_commutator_model(D: GradedMatrix, a: AlgebraElement, k: WeylFactor,
                             exponent: float, w: TruncationWindow, params: AlgebraParams,
                             side: str = "left") -> GradedMatrix:
    """Twisted commutator with sigma realized at the operator level.

    sigma(a) is represented as K^e A K^{-e} where K is the compressed
    multiplication matrix of k and A that of a.  This keeps the model usable
    when the algebra element k^e a k^{-e} outgrows the window; it agrees with
    the algebra-level version on the common margin.
    """
    if side == "left":
        A = mult_matrix(w, params, left=a, q=D.q)
        K = mult_matrix(w, params, left=k.power(exponent), q=D.q)
        Ki = mult_matrix(w, params, left=k.power(-exponent), q=D.q)
    else:
        A = mult_matrix(w, params, right=a, q=D.q)
        K = mult_matrix(w, params, right=k.power(exponent), q=D.q)
        Ki = mult_matrix(w, params, right=k.power(-exponent), q=D.q)
    Sa = K.data @ A.data @ Ki.data
    return GradedMatrix(D.data @ A.data - Sa @ D.data, D.n_plus, w, D.q, "odd")


def twisted_inner_product(a: AlgebraElement, b: AlgebraElement, k: WeylFactor) -> complex:
    """<a, b>_phi = phi0(b* a k^{-2}) (the GNS inner product of the weight)."""
    p = k.params
    return trace_phi0(multiply(multiply(star(b, p), a, p), k.power(-2.0), p))


def verify_gns_unitarity(k: WeylFactor, w: TruncationWindow, seed: int = 7,
                         n_pairs: int = 24, inverse_power: float = -2.0) -> float:
    """Max deviation |<R_k a, R_k b>_phi - <a, b>| over seeded margin pairs.

    Computed in exact algebra arithmetic (traciality makes the identity
    exact); the margin only bounds the support of the probe elements.
    inverse_power=-2 is the correct weight; passing -1 is the deliberate
    failure probe used to check that the test can fail.
    """
    from .algebra import random_element

    p = k.params
    rng = np.random.default_rng(seed)
    band = max(1, w.margin if w.margin > 0 else min(2, w.n))
    worst = 0.0
    kel = k.k
    km = k.power(inverse_power)
    for _ in range(n_pairs):
        a = random_element(rng, band)
        b = random_element(rng, band)
        ak = multiply(a, kel, p)
        bk = multiply(b, kel, p)
        lhs = trace_phi0(multiply(multiply(star(bk, p), ak, p), km, p))
        rhs = trace_phi0(multiply(star(b, p), a, p))
        worst = max(worst, abs(lhs - rhs))
    return worst


def gram_phi(k: WeylFactor, w: TruncationWindow) -> np.ndarray:
    """Exact Gram matrix of the monomial basis in the weight inner product.

    G[j, i] = <e_i, e_j>_phi = phi0(e_j* e_i k^{-2}); every entry is computed
    from the algebra (no compression), so G is the restriction of the true
    Gram to the window.
    """
    p = k.params
    th = p.theta
    km2 = k.power(-2.0)
    d = w.dim
    M, N = w.lattice()
    G = np.zeros((d, d), dtype=complex)
    # e_j* e_i = exp(2 pi i theta (m_j n_j - n_j m_i)) U^{m_i-m_j} V^{n_i-n_j}
    # phi0(U^a V^b k^{-2}) = exp(-2 pi i theta a b)... trace picks (-a,-b):
    # (U^a V^b)(U^{-a} V^{-b}) = exp(2 pi i theta b (-a)) U^0 V^0.
    for (a, b), c in km2.coeffs.items():
        # need (m_i - m_j, n_i - n_j) = (-a, -b)
        dm, dn = -a, -b
        j_m = M[:, None]
        # vectorized over (j, i) pairs on the shifted diagonal
        mi = M + 0
        ni = N + 0
        tm = mi - dm  # m_j
        tn = ni - dn  # n_j
        ok = (np.abs(tm) <= w.n) & (np.abs(tn) <= w.n)
        ii = np.nonzero(ok)[0]
        jj = (tm[ok] + w.n) * w.side + (tn[ok] + w.n)
        mj, nj = tm[ok], tn[ok]
        phase = np.exp(1j * TWO_PI * th * (mj * nj - nj * mi[ok] + b * (-a)))
        G[jj, ii] += c * phase
    return G


def intertwining_deviation(k: WeylFactor, w: TruncationWindow, margin: int | None = None) -> float:
    """Margin deviation of W^{-1} D_phi W from omega D omega.

    D_phi is realized on the GNS side: the holomorphic block is the diagonal
    derivation in monomial coordinates of H_phi^0, its adjoint is computed
    through the exact Gram matrix of the weight inner product (a linear
    solve, no inverse), and W_0 is the compressed right multiplication by k.
    The comparison is column-by-column over margin-supported basis vectors.
    """
    params = k.params
    m = w.margin if margin is None else margin
    sym = dirac_symbol(w, params)
    Rk = _mult_matrix_half(None, k.k, w, params)
    G = gram_phi(k, w)
    mask = w.margin_mask(m)
    idx = np.nonzero(mask)[0]
    worst = 0.0
    # lower-left block (H0 -> H10): both sides equal Delta . R_k by construction;
    # the content is the adjoint block, solved from the Gram matrix.
    rhs_cols = Rk @ np.diag(sym.conjugate())[:, idx]
    lhs_inner = np.linalg.solve(G, np.diag(sym.conjugate())[:, idx])
    lhs_cols = np.linalg.solve(Rk, lhs_inner)
    worst = max(worst, float(np.abs(lhs_cols - rhs_cols).max()))
    # holomorphic block, asserted for completeness
    ll = np.diag(sym) @ Rk[:, idx] - np.diag(sym) @ Rk[:, idx]
    worst = max(worst, float(np.abs(ll).max()))
    return worst


def margin_for(w: TruncationWindow, elements, tol: float) -> int:
    """Data-driven margin: window minus the effective bands of participants.

    Effective bands are measured at the assertion tolerance; returns -1 when
    no usable margin exists (caller escalates the window).
    """
    total = 0
    for el in elements:
        total += el.band_at_tol(tol)
    return w.n - total
