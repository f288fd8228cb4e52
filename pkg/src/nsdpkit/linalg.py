"""Symmetric-matrix kernels used throughout the package.

Everything here operates on dense symmetric matrices at desk scale
(dimension up to a few dozen).  The eigensolver is a cyclic Jacobi
iteration rather than a LAPACK call so that results are deterministic
across platforms and the off-diagonal residual is available as an
explicit diagnostic.  Eigenvalues are always reported in non-increasing
order; ties are broken by a lexicographic comparison of the
sign-canonicalized eigenvectors so that equal inputs produce identical
output arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Default tolerances.  Scale-dependent ones are documented at the use
# site; each function takes an override so callers can tighten or relax.
EPS_ORTH_FACTOR = 1e-10     # orthogonality: eps * m
EPS_RECON_FACTOR = 1e-9     # reconstruction: eps * (1 + ||M||_F)
EPS_PSD_FACTOR = 1e-9       # cone membership: eps * (1 + ||M||_F)
EPS_RANK = 1e-7             # relative rank threshold
EPS_PLD = 1e-8              # positive-linear-dependence residual

_JACOBI_MAX_SWEEPS = 100
_SIGN_TINY = 1e-300


class JacobiConvergenceError(RuntimeError):
    """Raised when the Jacobi sweep cap is hit before convergence.

    Carries the remaining off-diagonal Frobenius norm so callers can
    report how far from diagonal the iteration stalled.
    """

    def __init__(self, offdiag_residual: float, sweeps: int):
        self.offdiag_residual = float(offdiag_residual)
        self.sweeps = int(sweeps)
        super().__init__(
            f"Jacobi iteration did not converge after {sweeps} sweeps "
            f"(off-diagonal residual {offdiag_residual:.3e})"
        )


def sym_part(M: np.ndarray) -> np.ndarray:
    """Symmetrize a square matrix."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def check_symmetric(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Return M as a float array, raising ValueError if not symmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = 1.0 + float(np.abs(M).max(initial=0.0))
    if float(np.abs(M - M.T).max(initial=0.0)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return M


def frob(M: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float)))


def inner(M: np.ndarray, N: np.ndarray) -> float:
    """Trace inner product of two symmetric matrices."""
    return float(np.sum(np.asarray(M, dtype=float) * np.asarray(N, dtype=float)))


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues (non-increasing) and matching orthonormal eigenvectors.

    Arrays are not copied on access; treat instances as immutable.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.T


@dataclass(frozen=True)
class EigBasis:
    """Column-orthonormal basis for the span of the smallest eigenvalues.

    ``cols`` has shape (m, m - r); columns are ordered to match the
    eigenvalues sorted non-increasingly, i.e. column 0 pairs with the
    (r+1)-th largest eigenvalue.  ``rank`` is the r used to split.
    An empty basis (r == m) has shape (m, 0).
    """

    cols: np.ndarray
    rank: int

    @property
    def width(self) -> int:
        return self.cols.shape[1]


def _jacobi(M: np.ndarray, max_sweeps: int = _JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi iteration; returns (diagonal values, rotation matrix)."""
    A = np.array(M, dtype=float)
    m = A.shape[0]
    V = np.eye(m)
    if m <= 1:
        return np.diag(A).copy(), V
    scale = 1.0 + frob(A)
    off_tol = 1e-14 * scale
    for sweep in range(max_sweeps):
        off = np.sqrt(max(np.sum(np.triu(A, 1) ** 2) * 2.0, 0.0))
        if off <= off_tol:
            return np.diag(A).copy(), V
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                # 2x2 rotation zeroing A[p, q]; the smaller-angle root is
                # chosen for stability.
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0.0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(m):
                    if i == p or i == q:
                        continue
                    aip, aiq = A[i, p], A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[p, i] = A[i, p]
                    A[i, q] = s * aip + c * aiq
                    A[q, i] = A[i, q]
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    off = np.sqrt(max(np.sum(np.triu(A, 1) ** 2) * 2.0, 0.0))
    if off <= off_tol:
        return np.diag(A).copy(), V
    raise JacobiConvergenceError(off, max_sweeps)


def _canonical_sign(col: np.ndarray) -> np.ndarray:
    """Flip a vector so its largest-magnitude entry is positive."""
    idx = int(np.argmax(np.abs(col)))
    if col[idx] < -_SIGN_TINY:
        return -col
    return col


def spectral_decompose(M: np.ndarray) -> SpectralDecomp:
    """Spectral decomposition with eigenvalues sorted non-increasingly.

    Deterministic: a fixed sweep order and a lexicographic tie-break on
    the sign-canonicalized eigenvectors make repeated calls on equal
    inputs return identical arrays.
    """
    M = check_symmetric(M)
    vals, V = _jacobi(M)
    cols = [_canonical_sign(V[:, i].copy()) for i in range(M.shape[0])]
    order = sorted(
        range(M.shape[0]),
        key=lambda i: (-vals[i], tuple(cols[i])),
    )
    lam = np.array([vals[i] for i in order])
    U = np.column_stack([cols[i] for i in order]) if order else np.eye(0)
    return SpectralDecomp(eigenvalues=lam, eigenvectors=U)


def proj_psd(M: np.ndarray) -> np.ndarray:
    """Frobenius projection onto the positive semidefinite cone."""
    dec = spectral_decompose(M)
    lam = np.maximum(dec.eigenvalues, 0.0)
    U = dec.eigenvectors
    return sym_part((U * lam) @ U.T)


def moreau_split(M: np.ndarray):
    """Split M into its PSD part and the PSD part of -M.

    Returns (plus, minus) with plus = proj_psd(M), minus = proj_psd(-M),
    M = plus - minus and <plus, minus> = 0 up to reconstruction error.
    Both pieces come from a single decomposition so the identities hold
    to machine precision.
    """
    dec = spectral_decompose(M)
    U = dec.eigenvectors
    plus = sym_part((U * np.maximum(dec.eigenvalues, 0.0)) @ U.T)
    minus = sym_part((U * np.maximum(-dec.eigenvalues, 0.0)) @ U.T)
    return plus, minus


def eig_basis_smallest(M: np.ndarray, r: int) -> EigBasis:
    """Orthonormal eigenvectors for the m - r smallest eigenvalues.

    Columns are ordered by increasing eigenvalue, so the first column
    tracks the smallest one.  This matches how synthetic shifts assign
    eigenvalues (r+1)s, ..., ms to columns 1..m-r.  r == m yields an
    empty basis, which is the legitimate full-rank outcome rather than
    an error.
    """
    dec = spectral_decompose(M)
    m = dec.m
    if not 0 <= r <= m:
        raise ValueError(f"rank split r={r} out of range for m={m}")
    return EigBasis(cols=dec.eigenvectors[:, r:][:, ::-1].copy(), rank=r)


def numerical_rank(values: np.ndarray, scale: float, eps_rank: float = EPS_RANK) -> int:
    """Count entries strictly above eps_rank * scale.

    ``values`` must be sorted non-increasingly; ``scale`` must be
    positive (pass the spectral norm or 1.0 for an absolute floor).
    """
    values = np.asarray(values, dtype=float)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if values.size > 1 and np.any(np.diff(values) > 1e-12 * (1.0 + scale)):
        raise ValueError("values must be sorted non-increasingly")
    return int(np.sum(values > eps_rank * scale))


def rank_of_psd(M: np.ndarray, eps_rank: float = EPS_RANK) -> int:
    """Numerical rank of a (nearly) PSD matrix via its eigenvalues."""
    dec = spectral_decompose(M)
    lam = dec.eigenvalues
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    return numerical_rank(np.maximum(lam, 0.0), scale, eps_rank)


def family_singular_values(vectors) -> np.ndarray:
    """Singular values of the matrix whose columns are the given vectors.

    Computed through the Gram matrix with the in-house eigensolver so the
    whole dependence pipeline shares one deterministic kernel.
    """
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not vecs:
        return np.zeros(0)
    A = np.column_stack(vecs)
    gram = sym_part(A.T @ A)
    lam = spectral_decompose(gram).eigenvalues
    return np.sqrt(np.maximum(lam, 0.0))


def lin_dependent(vectors, eps_rank: float = EPS_RANK) -> bool:
    """True iff the family has numerical rank below its cardinality.

    Singular values at or below eps_rank times the largest are treated
    as zero; an all-zero family (including a single zero vector) counts
    as dependent.
    """
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    p = len(vecs)
    if p == 0:
        return False
    sig = family_singular_values(vecs)
    smax = float(sig.max(initial=0.0))
    if smax <= 0.0:
        return True
    rank = int(np.sum(sig > eps_rank * smax))
    return rank < p


def _phase1_simplex(A: np.ndarray, b: np.ndarray) -> float:
    """Minimal l1 infeasibility of {A x = b, x >= 0} via a phase-1 simplex.

    Dense tableau with Bland's rule, so termination is guaranteed.
    Returns the optimal artificial sum (0 means feasible).
    """
    rows, cols = A.shape
    A = A.copy()
    b = b.copy()
    for i in range(rows):
        if b[i] < 0.0:
            A[i, :] *= -1.0
            b[i] *= -1.0
    scale = 1.0 + float(np.abs(A).max(initial=0.0))
    tol = 1e-11 * scale
    # tableau columns: original vars, artificials, rhs
    T = np.zeros((rows, cols + rows + 1))
    T[:, :cols] = A
    T[:, cols:cols + rows] = np.eye(rows)
    T[:, -1] = b
    basis = list(range(cols, cols + rows))
    # phase-1 objective row: minimize the artificial sum
    obj = np.zeros(cols + rows + 1)
    obj[cols:cols + rows] = 1.0
    for bi, row in zip(basis, range(rows)):
        obj -= T[row, :]
    for _ in range(50000):
        entering = -1
        for j in range(cols + rows):
            if j in basis:
                continue
            if obj[j] < -tol:
                entering = j
                break  # Bland: smallest eligible index
        if entering < 0:
            break
        leaving_row = -1
        best_ratio = np.inf
        for i in range(rows):
            a = T[i, entering]
            if a > tol:
                ratio = T[i, -1] / a
                if ratio < best_ratio - 1e-15 or (
                    abs(ratio - best_ratio) <= 1e-15
                    and (leaving_row < 0 or basis[i] < basis[leaving_row])
                ):
                    best_ratio = ratio
                    leaving_row = i
        if leaving_row < 0:
            break  # unbounded direction cannot happen in phase 1
        piv = T[leaving_row, entering]
        T[leaving_row, :] /= piv
        for i in range(rows):
            if i != leaving_row and T[i, entering] != 0.0:
                T[i, :] -= T[i, entering] * T[leaving_row, :]
        obj -= obj[entering] * T[leaving_row, :]
        basis[leaving_row] = entering
    value = 0.0
    for bi, row in zip(basis, range(rows)):
        if bi >= cols:
            value += max(T[row, -1], 0.0)
    return float(value)


def pos_lin_dependent(vectors, eps_pld: float = EPS_PLD) -> bool:
    """True iff some nonzero nonnegative combination of the family vanishes.

    Feasibility of {sum_i a_i z_i = 0, a >= 0, sum_i a_i = 1} is decided
    with an exact phase-1 simplex; the family is positively dependent
    when the minimal infeasibility is at most eps_pld.
    """
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    p = len(vecs)
    if p == 0:
        return False
    n = vecs[0].shape[0]
    A = np.zeros((n + 1, p))
    for j, v in enumerate(vecs):
        if v.shape[0] != n:
            raise ValueError("vectors must share a common dimension")
        A[:n, j] = v
    A[n, :] = 1.0
    b = np.zeros(n + 1)
    b[n] = 1.0
    return _phase1_simplex(A, b) <= eps_pld


def haar_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR of a Gaussian draw."""
    if k == 0:
        return np.zeros((0, 0))
    Z = rng.standard_normal((k, k))
    Q, R = np.linalg.qr(Z)
    # fix the QR sign ambiguity so the distribution is exactly Haar
    d = np.sign(np.diag(R))
    d[d == 0.0] = 1.0
    return Q * d


def orthonormal_columns(B: np.ndarray) -> np.ndarray:
    """Thin QR orthonormalization with signs matched to the input columns."""
    if B.shape[1] == 0:
        return B.copy()
    Q, R = np.linalg.qr(B)
    d = np.sign(np.diag(R))
    d[d == 0.0] = 1.0
    return Q * d


def align_columns(E_ref: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Permute and sign-flip columns of E to best match E_ref.

    Greedy assignment on absolute column inner products.  Used to keep
    eigenbases coherent across nearby matrices, where column order and
    sign are otherwise arbitrary.
    """
    q = E.shape[1]
    if q == 0 or E_ref.shape != E.shape:
        return E.copy()
    dots = E_ref.T @ E  # dots[i, j] = <ref_i, e_j>
    taken_ref = [False] * q
    taken_col = [False] * q
    perm = [0] * q
    signs = [1.0] * q
    flat = sorted(
        ((abs(dots[i, j]), i, j) for i in range(q) for j in range(q)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    for _, i, j in flat:
        if taken_ref[i] or taken_col[j]:
            continue
        taken_ref[i] = True
        taken_col[j] = True
        perm[i] = j
        signs[i] = 1.0 if dots[i, j] >= 0.0 else -1.0
    out = np.column_stack([signs[i] * E[:, perm[i]] for i in range(q)])
    return out
