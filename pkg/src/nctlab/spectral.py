"""Dense Hermitian eigendecomposition, singular values, s-spectra and
gap-certified kernel dimension estimates.

Problem sizes stay small enough (< ~6000) for LAPACK dense solvers; no
sparse machinery.  Eigenvalues are sorted ascending by absolute value with
ties broken by signed value, matching the lambda_1, lambda_2, ... ordering
used for smallest-eigenvalue bounds.  Multiplicity is plain eigen
multiplicity; graded pairs +-lambda count separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .representation import GradedMatrix, TruncationWindow

HERMITICITY_RTOL = 1e-12
ST_HERMITICITY_TOL = 1e-10

KERNEL_CUTOFF = 1e-7
GAP_RATIO_MIN = 10.0


class NotHermitian(ValueError):
    """Raised when hermitian_eigen receives a non-Hermitian matrix."""


class STNotHermitian(ValueError):
    """Raised when S.T fails its Hermiticity contract; signals that the
    supplied connection is not sigma-Hermitian."""


def _as_array(T) -> np.ndarray:
    return T.data if isinstance(T, GradedMatrix) else np.asarray(T, dtype=complex)


def _sort_by_abs(values: np.ndarray) -> np.ndarray:
    order = np.lexsort((values, np.abs(values)))
    return values[order]


@dataclass
class SpectralReport:
    """Sorted eigen/singular values with residuals and a stability flag.

    values are ascending by |value| (ties by signed value); residual is the
    max ||Av - lambda v|| over computed pairs; stable is set by window-ladder
    drivers when the lowest quartile agrees across two windows.
    """

    values: np.ndarray
    residual: float
    window: TruncationWindow | None = None
    stable: bool = False
    kind: str = "eigen"

    def lowest(self, count: int) -> np.ndarray:
        return self.values[: min(count, len(self.values))]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "values": [float(v) for v in self.values],
            "residual": float(self.residual),
            "window": None if self.window is None else self.window.n,
            "stable": bool(self.stable),
        }

    def to_csv_rows(self):
        for i, v in enumerate(self.values):
            yield (i, float(v), float(self.residual))


@dataclass
class KernelEstimate:
    """Gap-certified count of singular values below a cutoff.

    indeterminate is set when the first singular value above the cutoff is
    less than GAP_RATIO_MIN times the cutoff; such estimates are excluded
    from index reports and the caller escalates the window.
    """

    dim: int
    cutoff: float
    gap_ratio: float
    indeterminate: bool
    smallest: float = 0.0

    @property
    def certified(self) -> bool:
        return not self.indeterminate

    def to_json(self) -> dict:
        gr = self.gap_ratio
        return {
            "dim": int(self.dim),
            "cutoff": float(self.cutoff),
            "gap_ratio": None if np.isinf(gr) else float(gr),
            "indeterminate": bool(self.indeterminate),
            "smallest": float(self.smallest),
        }


def hermitian_eigen(M, window: TruncationWindow | None = None,
                    want_vectors: bool = False):
    """Full spectrum of a Hermitian matrix with the residual contract.

    Raises NotHermitian unless ||M - M*|| <= 1e-12 ||M||.
    """
    A = _as_array(M)
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.conj().T).max() > HERMITICITY_RTOL * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh(A)
    res = float(np.abs(A @ vecs - vecs * vals).max())
    order = np.lexsort((vals, np.abs(vals)))
    rep = SpectralReport(vals[order], res, window, kind="eigen")
    if want_vectors:
        return rep, vecs[:, order]
    return rep


def singular_values(T, window: TruncationWindow | None = None) -> SpectralReport:
    """Nonnegative square roots of eig(T*T), ascending."""
    A = _as_array(T)
    s = np.linalg.svd(A, compute_uv=False)
    s = np.sort(s)
    # svd residual is at LAPACK level; report machine-scale residual
    res = float(np.finfo(float).eps * max(s[-1] if s.size else 0.0, 1.0) * max(A.shape))
    return SpectralReport(s, res, window, kind="singular")


def s_spectrum(T, S, window: TruncationWindow | None = None,
               tol: float = ST_HERMITICITY_TOL) -> SpectralReport:
    """Eigenvalues of S.T sorted by absolute value (the s-eigenvalues of T).

    S must be even and invertible; S.T must be Hermitian to tol, otherwise
    STNotHermitian is raised (the supplied connection is not sigma-Hermitian).
    """
    A = _as_array(T)
    B = _as_array(S)
    if isinstance(S, GradedMatrix) and S.parity == "odd":
        raise ValueError("s-map must be even")
    ST = B @ A
    scale = max(np.abs(ST).max(), 1.0)
    defect = np.abs(ST - ST.conj().T).max()
    if defect > tol * scale:
        raise STNotHermitian(
            f"S.T Hermiticity defect {defect:.3e} exceeds {tol:.1e} (x scale {scale:.2e})"
        )
    H = 0.5 * (ST + ST.conj().T)
    vals, vecs = np.linalg.eigh(H)
    res = float(np.abs(H @ vecs - vecs * vals).max() + defect)
    order = np.lexsort((vals, np.abs(vals)))
    return SpectralReport(vals[order], res, window, kind="s-eigen")


def kernel_dim(T, cutoff: float = KERNEL_CUTOFF,
               gap_ratio_min: float = GAP_RATIO_MIN) -> KernelEstimate:
    """Count singular values below cutoff, with gap certification.

    gap_ratio = (first singular value above cutoff) / cutoff; the estimate is
    indeterminate when gap_ratio < gap_ratio_min.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    A = _as_array(T)
    if A.size == 0:
        return KernelEstimate(0, cutoff, np.inf, False, 0.0)
    s = np.sort(np.linalg.svd(A, compute_uv=False))
    # a rectangular domain deficit counts as exact kernel
    extra = max(A.shape[1] - A.shape[0], 0)
    below = int(np.searchsorted(s, cutoff)) + extra
    above = s[s >= cutoff]
    gap_ratio = float(above[0] / cutoff) if above.size else np.inf
    smallest = float(s[0]) if s.size else 0.0
    return KernelEstimate(below, cutoff, gap_ratio,
                          bool(gap_ratio < gap_ratio_min), smallest)


def minmax_check(T, S, count: int = 20,
                 window: TruncationWindow | None = None) -> float:
    """Max over j <= count of | |lambda_j(T)| - mu_j(T) |.

    lambda_j are the s-eigenvalues (spectrum of S.T), mu_j the characteristic
    values of T in the module Hilbert structure, i.e. the singular values of
    S.T since S is the unitary identification of the two module spaces.
    """
    rep = s_spectrum(T, S, window)  # raises STNotHermitian when appropriate
    A = _as_array(T)
    B = _as_array(S)
    mu = np.sort(np.linalg.svd(B @ A, compute_uv=False))
    lam = np.sort(np.abs(rep.values))
    count = min(count, len(lam), len(mu))
    return float(np.abs(lam[:count] - mu[:count]).max())


def spectrum_stability(values_a: np.ndarray, values_b: np.ndarray,
                       quartile: float = 0.25, rtol: float = 1e-6) -> bool:
    """Whether the lowest quartile of two sorted-by-|.| spectra agree."""
    k = max(1, int(quartile * min(len(values_a), len(values_b))))
    va, vb = values_a[:k], values_b[:k]
    return bool(np.all(np.abs(va - vb) <= rtol * (1.0 + np.abs(va))))
