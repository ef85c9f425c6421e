"""Compressed module subspaces and coupled Dirac-type operators.

A module idempotent is compressed to the window, symmetrized spectrally, and
its range becomes the module subspace.  Twisted translates are produced by
conjugating that one spectral projection with a single compressed positive
half-multiplier C, so the finite model satisfies the sigma-selfadjointness
relations (translate = adjoint) to rounding, independently of truncation
tails.  Coupled operators come in two forms:

* square, in the induced-metric gauge, for spectra and s-machinery: the
  s-gauged operator is an exact Galerkin compression, so S.T is Hermitian to
  rounding and the max-min identity is exact;

* rectangular, with a margin-restricted domain, for kernel counting: a
  square compression provably produces mirror-symmetric singular values in
  the two chiral blocks (rank-nullity), which hides Fredholm indices; the
  rectangular form restores them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import AlgebraElement, AlgebraParams, WeylFactor
from .modules import Idempotent, clip_to_band
from .representation import (
    GradedMatrix,
    TruncationWindow,
    _mult_matrix_half,
)

PROJECTION_SPLIT = 0.5
ORTH_RCOND = 1e-9


class BandExceedsWindow(ValueError):
    pass


def idempotent_half_matrix(e: Idempotent, w: TruncationWindow) -> tuple[np.ndarray, float]:
    """Compressed matrix of the idempotent action on one graded half of H^q.

    Entries outside the window band are clipped; the clipped l1 mass is
    returned as a structural-error diagnostic.  rep_side selects left or
    right multiplication; right-module matrix actions use the transposed
    block layout so that the compressed action is an algebra morphism for
    the opposite product.
    """
    e_cl, clipped = clip_to_band(e, w.n)
    d = w.dim
    q = e.q
    out = np.zeros((q * d, q * d), dtype=complex)
    for i in range(q):
        for j in range(q):
            if e.rep_side == "left":
                blk = _mult_matrix_half(e_cl.entries[i][j], None, w, e.params)
                out[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
            else:
                blk = _mult_matrix_half(None, e_cl.entries[j][i], w, e.params)
                out[i * d:(i + 1) * d, j * d:(j + 1) * d] = blk
    return out, clipped


def _orth(cols: np.ndarray, rcond: float = ORTH_RCOND) -> np.ndarray:
    """Orthonormal basis of the column span (SVD-based, rank-revealing)."""
    if cols.size == 0:
        return cols.reshape(cols.shape[0], 0)
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s.size == 0:
        return u[:, :0]
    keep = s > rcond * s[0]
    return u[:, keep]


@dataclass
class ModuleModel:
    """Spectral-range model of a (possibly sigma-translated) module.

    q_hat: orthonormal basis of the compressed module range on one half;
    half_mult: the positive half-multiplier C implementing the ribbon square
    root of the twist (None for untwisted modules);
    projection_gap: distance of the compressed idempotent's spectrum to 1/2.
    """

    window: TruncationWindow
    params: AlgebraParams
    q: int
    q_hat: np.ndarray
    projection_gap: float
    clipped_mass: float
    half_mult: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def rank(self) -> int:
        return self.q_hat.shape[1]

    @property
    def is_full(self) -> bool:
        return self.rank == self.q_hat.shape[0]

    def with_half_mult(self, c: np.ndarray | None) -> "ModuleModel":
        """Same compressed range, different twist multiplier (reuses the
        spectral decomposition; used by sweeps over Weyl families)."""
        return ModuleModel(
            window=self.window, params=self.params, q=self.q,
            q_hat=self.q_hat, projection_gap=self.projection_gap,
            clipped_mass=self.clipped_mass, half_mult=c,
        )

    def _bases(self):
        if "bases" not in self._cache:
            if self.half_mult is None or self.is_full:
                # a full free module keeps the canonical identity s-map
                qdom = qran = np.eye(self.q_hat.shape[0], dtype=complex) \
                    if self.is_full else self.q_hat
            else:
                c = self.half_mult
                qdom = _orth(np.linalg.solve(c, self.q_hat))
                qran = _orth(c @ self.q_hat)
            w = qdom.conj().T @ qran
            # induced-metric gauge: S becomes the unitary polar factor of W
            u, s, vh = np.linalg.svd(w)
            s_unitary = u @ vh
            h_gauge = vh.conj().T @ np.diag(s) @ vh  # (W^H W)^{1/2}
            self._cache["bases"] = (qdom, qran, w, s_unitary, h_gauge)
        return self._cache["bases"]

    @property
    def q_dom(self) -> np.ndarray:
        return self._bases()[0]

    @property
    def q_ran(self) -> np.ndarray:
        return self._bases()[1]

    def dom_idempotent(self) -> np.ndarray:
        """The exactly idempotent compressed matrix C^{-1} P_hat C."""
        if self.half_mult is None:
            return self.q_hat @ self.q_hat.conj().T
        c = self.half_mult
        p = self.q_hat @ self.q_hat.conj().T
        return np.linalg.solve(c, p @ c)

    def ran_idempotent(self) -> np.ndarray:
        if self.half_mult is None:
            return self.q_hat @ self.q_hat.conj().T
        c = self.half_mult
        p = self.q_hat @ self.q_hat.conj().T
        return c @ np.linalg.solve(c.T.conj(), p.T.conj()).T.conj()

    def s_matrix(self) -> GradedMatrix:
        """The s-identification in the induced-metric gauge: exactly unitary,
        even, mapping translated-module coordinates to module coordinates."""
        _, _, _, s_unitary, _ = self._bases()
        r = s_unitary.shape[0]
        data = np.zeros((2 * r, 2 * r), dtype=complex)
        data[:r, :r] = s_unitary
        data[r:, r:] = s_unitary
        return GradedMatrix(data, r, self.window, self.q, "even")

    def s_pairing(self) -> np.ndarray:
        """Raw subspace pairing Q_dom^H Q_ran (the ungauged s-map)."""
        return self._bases()[2]

    def couple(self, D: GradedMatrix) -> GradedMatrix:
        """Coupled operator sigma(e)(D (x) 1_q) in induced-gauge coordinates.

        Returns the odd graded matrix T with n_plus = rank; the matching
        s-map is s_matrix().  S.T equals the plain Galerkin compression of D
        onto the (twisted) module subspace, Hermitian to rounding.
        """
        qdom, qran, w, s_unitary, h_gauge = self._bases()
        b_low = D.block("-", "+")  # H+ -> H-
        b_up = D.block("+", "-")
        ran_p = self.ran_idempotent()
        t_low = h_gauge @ (qran.conj().T @ (ran_p @ (b_low @ qdom)))
        t_up = h_gauge @ (qran.conj().T @ (ran_p @ (b_up @ qdom)))
        r = qdom.shape[1]
        data = np.zeros((2 * r, 2 * r), dtype=complex)
        data[r:, :r] = t_low
        data[:r, r:] = t_up
        return GradedMatrix(data, r, self.window, self.q, "odd")

    def compress_morphism(self, A: GradedMatrix | np.ndarray) -> np.ndarray:
        """Gauged compression of a full-window operator H(E) -> H(E^sigma)."""
        a = A.data if isinstance(A, GradedMatrix) else A
        qdom, qran, _, _, h_gauge = self._bases()
        ran_p = self.ran_idempotent()
        r = qdom.shape[1]
        full = np.zeros((2 * r, 2 * r), dtype=complex)
        blocks = [(slice(0, r), slice(0, r)), (slice(0, r), slice(r, None)),
                  (slice(r, None), slice(0, r)), (slice(r, None), slice(r, None))]
        qd = a.shape[0] // 2
        amb = [(slice(0, qd), slice(0, qd)), (slice(0, qd), slice(qd, None)),
               (slice(qd, None), slice(0, qd)), (slice(qd, None), slice(qd, None))]
        for (ri, ci), (ai, aj) in zip(blocks, amb):
            full[ri, ci] = h_gauge @ (qran.conj().T @ (ran_p @ (a[ai, aj] @ qdom)))
        return full

    def couple_perturbed(self, D: GradedMatrix, a_raw: np.ndarray,
                         amplitude: float, project: bool = True) -> GradedMatrix:
        """Coupled operator of the connection perturbed by a raw morphism.

        The compressed perturbation is projected onto its s-compatible part
        (the unique component keeping the coupled operator s-selfadjoint)
        unless project=False, which is the deliberate negative control.
        """
        T = self.couple(D)
        a_g = self.compress_morphism(a_raw)
        scale = max(np.abs(a_g).max(), 1e-30)
        a_g = a_g / scale
        if project:
            s = self.s_matrix().data
            m = s @ a_g
            m_h = 0.5 * (m + m.conj().T)
            a_g = s.conj().T @ m_h
        data = T.data + amplitude * a_g
        return GradedMatrix(data, T.n_plus, self.window, self.q, "none")

    def galerkin(self, D: GradedMatrix) -> GradedMatrix:
        """S.T directly: the Galerkin compression of D onto the module domain."""
        qdom = self.q_dom
        r = qdom.shape[1]
        data = np.zeros((2 * r, 2 * r), dtype=complex)
        data[r:, :r] = qdom.conj().T @ D.block("-", "+") @ qdom
        data[:r, r:] = qdom.conj().T @ D.block("+", "-") @ qdom
        return GradedMatrix(data, r, self.window, self.q, "odd")

    def margin_domain(self, margin: int) -> np.ndarray:
        """Orthonormal basis of the module image of margin-supported vectors."""
        key = ("mdom", margin)
        if key not in self._cache:
            mask = np.tile(self.window.margin_mask(margin), self.q)
            pdom = self.dom_idempotent()
            self._cache[key] = _orth(pdom[:, mask])
        return self._cache[key]

    def kernel_blocks(self, D: GradedMatrix, margin: int) -> tuple[np.ndarray, np.ndarray]:
        """Rectangular chiral blocks for kernel counting.

        Domain: module image of margin-supported vectors; range: the full
        compressed translate.  The margin restriction can only raise
        singular values, so kernel counts are never inflated by it.
        """
        qm = self.margin_domain(margin)
        qran = self.q_ran
        ran_p = self.ran_idempotent()
        b_plus = qran.conj().T @ (ran_p @ (D.block("-", "+") @ qm))
        b_minus = qran.conj().T @ (ran_p @ (D.block("+", "-") @ qm))
        return b_plus, b_minus


def module_model(e: Idempotent, w: TruncationWindow,
                 half_mult: np.ndarray | None = None) -> ModuleModel:
    """Build the spectral-range model of a compressed idempotent.

    e must be selfadjoint (the compressed matrix is then Hermitian and its
    spectral projection above 1/2 is exact); twisted translates are obtained
    through half_mult, not by compressing conjugated entries.
    """
    sd = e.star_defect()
    if sd > 1e-8:
        raise ValueError(f"module seed must be selfadjoint, star defect {sd:.2e}")
    pi, clipped = idempotent_half_matrix(e, w)
    pi = 0.5 * (pi + pi.conj().T)
    evals, evecs = np.linalg.eigh(pi)
    keep = evals > PROJECTION_SPLIT
    gap = float(np.abs(evals - PROJECTION_SPLIT).min()) if evals.size else 1.0
    return ModuleModel(
        window=w, params=e.params, q=e.q,
        q_hat=evecs[:, keep], projection_gap=gap,
        clipped_mass=clipped, half_mult=half_mult,
    )


def weyl_half_matrix(k: WeylFactor, w: TruncationWindow, side: str,
                     exponent: float = 0.5) -> np.ndarray:
    """Compressed multiplication matrix of k^exponent on one half.

    This is the single positive operator from which all twist conjugations in
    the finite model are formed (matrix powers of it, never compressions of
    algebra powers), so adjoint/translate relations hold to rounding.
    """
    from .algebra import clip_element

    el, _ = clip_element(k.power(exponent), w.n)
    if side == "left":
        m = _mult_matrix_half(el, None, w, k.params)
    else:
        m = _mult_matrix_half(None, el, w, k.params)
    return 0.5 * (m + m.conj().T)


def tensor_model(left: ModuleModel, right: ModuleModel,
                 half_mult: np.ndarray | None = None) -> ModuleModel:
    """Module model of the product class e (x) f of two commuting actions.

    The compressed ranges are intersected spectrally: eigenvectors of
    P1 P2 P1 above 1/2.  Both factors must live on the same window with
    q = 1 components (the shipped pairing classes).
    """
    if left.window.n != right.window.n:
        raise ValueError("tensor factors must share a window")
    p1 = left.q_hat @ left.q_hat.conj().T
    p2 = right.q_hat @ right.q_hat.conj().T
    m = p1 @ p2 @ p1
    m = 0.5 * (m + m.conj().T)
    evals, evecs = np.linalg.eigh(m)
    keep = evals > PROJECTION_SPLIT
    gap = float(np.abs(evals - PROJECTION_SPLIT).min()) if evals.size else 1.0
    return ModuleModel(
        window=left.window, params=left.params, q=left.q * right.q,
        q_hat=evecs[:, keep], projection_gap=gap,
        clipped_mass=max(left.clipped_mass, right.clipped_mass),
        half_mult=half_mult,
    )


def grading_flip_defect(T: GradedMatrix) -> float:
    """||T gamma + gamma T|| for the grading gamma (odd-parity witness)."""
    g = np.diag(T.grading_signs())
    return float(np.abs(T.data @ g + g @ T.data).max())


def t_f_operator(f_model: ModuleModel, D: GradedMatrix) -> GradedMatrix:
    """The complementary-splitting defect operator of the dual class.

    T_F = (1 - 2 P_f)(D P_f - P_f D) on the full window space, built from the
    orthogonal spectral projection of the dual-class idempotent.  Odd.
    """
    qd = D.n_plus
    p_half = f_model.q_hat @ f_model.q_hat.conj().T
    pfull = np.zeros_like(D.data)
    pfull[:qd, :qd] = p_half
    pfull[qd:, qd:] = p_half
    comm = D.data @ pfull - pfull @ D.data
    data = (np.eye(2 * qd) - 2.0 * pfull) @ comm
    return GradedMatrix(data, qd, D.window, D.q, "odd")


def sigma_hermitian_projection(A: np.ndarray, s_unitary: np.ndarray) -> np.ndarray:
    """Project a raw module morphism onto the s-compatible (Hom-dagger) part.

    For the gauged unitary s-map U, the perturbed connection T + iA is
    s-selfadjoint iff U i A is Hermitian; the projection is
    A -> (A - U^H A^H U^H) / 2 blockwise on the odd parts.
    """
    return 0.5 * (A - s_unitary.conj().T @ A.conj().T @ s_unitary.conj().T)
