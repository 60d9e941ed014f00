"""Dense real-matrix kernel for desk-scale problems.

Everything the rest of the package needs from linear algebra lives here:
pivoted solves, the matrix exponential, eigenvalues, the real Schur form and
spectral radii.  Matrices are plain float64 numpy arrays.  The eigenvalue and
Schur routines are an in-repo Hessenberg reduction followed by Francis
double-shift QR with deflation; the matrices in this package never exceed a
few dozen rows, so simplicity and testability win over throughput.

All functions are pure: inputs are never mutated and results share no storage
with their arguments.
"""

from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from .errors import NoConvergence, Singular
from .tolerances import PIVOT_REL, QR_DEFLATE_REL, QR_SWEEP_FACTOR

__all__ = [
    "SchurResult",
    "solve_linear",
    "expm",
    "eigenvalues",
    "real_schur",
    "spectral_radius",
    "matrix_rank",
]

# Truncated-series order for the scaled exponential.  With the argument
# scaled to norm <= 0.5 the series tail is below 1e-21.
_EXPM_SERIES_ORDER = 17
_EXPM_SCALE_LIMIT = 0.5


def _as_square(M, name="matrix"):
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def solve_linear(A, b):
    """Solve A X = b by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of stacked right-hand sides; the result
    has the same shape.  Raises :class:`Singular` when the largest available
    pivot falls below ``PIVOT_REL * max|A|``.
    """
    A = _as_square(A, "A")
    n = A.shape[0]
    b_arr = np.asarray(b, dtype=float)
    vector_input = b_arr.ndim == 1
    B = b_arr.reshape(n, -1).copy() if vector_input else b_arr.copy()
    if B.shape[0] != n:
        raise ValueError(f"b has {B.shape[0]} rows, expected {n}")

    U = A.copy()
    scale = np.abs(U).max() if n else 0.0
    threshold = PIVOT_REL * scale

    for col in range(n):
        piv = col + int(np.argmax(np.abs(U[col:, col])))
        if abs(U[piv, col]) <= threshold:
            raise Singular(f"pivot {U[piv, col]:.3e} below threshold "
                           f"{threshold:.3e} at column {col}")
        if piv != col:
            U[[col, piv]] = U[[piv, col]]
            B[[col, piv]] = B[[piv, col]]
        factors = U[col + 1:, col] / U[col, col]
        U[col + 1:, col:] -= np.outer(factors, U[col, col:])
        B[col + 1:] -= np.outer(factors, B[col])

    X = np.empty_like(B)
    for row in range(n - 1, -1, -1):
        X[row] = (B[row] - U[row, row + 1:] @ X[row + 1:]) / U[row, row]
    return X.reshape(b_arr.shape) if vector_input else X


def matrix_rank(M, rel_tol):
    """Rank by row-echelon elimination with partial pivoting.

    Accepts real or complex input; a pivot counts while its magnitude exceeds
    ``rel_tol * max|M|``.  Used by the PBH rank tests, where the exact
    threshold semantics matter more than SVD-grade robustness.
    """
    A = np.array(M, dtype=complex if np.iscomplexobj(M) else float)
    if A.ndim != 2:
        raise ValueError("rank needs a 2-d array")
    rows, cols = A.shape
    scale = np.abs(A).max() if A.size else 0.0
    if scale == 0.0:
        return 0
    threshold = rel_tol * scale
    rank = 0
    row = 0
    for col in range(cols):
        if row >= rows:
            break
        piv = row + int(np.argmax(np.abs(A[row:, col])))
        if abs(A[piv, col]) <= threshold:
            continue
        if piv != row:
            A[[row, piv]] = A[[piv, row]]
        A[row + 1:, col:] -= np.outer(A[row + 1:, col] / A[row, col],
                                      A[row, col:])
        rank += 1
        row += 1
    return rank


def expm(M, t=1.0):
    """Matrix exponential e^(M t) by scaling and squaring.

    The argument is halved until its infinity norm is at most 0.5, run
    through a fixed-order truncated series (Horner form), then squared back
    up.  Total on finite input; exact to well below 1e-10 relative for
    ``norm(M t) <= 10``.
    """
    A = _as_square(M, "M")
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    n = A.shape[0]
    X = A * float(t)
    norm = np.abs(X).sum(axis=1).max() if n else 0.0
    squarings = 0 if norm <= _EXPM_SCALE_LIMIT else int(
        ceil(log2(norm / _EXPM_SCALE_LIMIT)))
    Y = X / (2.0 ** squarings)

    E = np.eye(n)
    for j in range(_EXPM_SERIES_ORDER, 0, -1):
        E = np.eye(n) + (Y @ E) / j
    for _ in range(squarings):
        E = E @ E
    return E


@dataclass(frozen=True)
class SchurResult:
    """Real Schur form ``T = V S V^T`` with orthogonal ``V``.

    ``T`` is quasi-upper-triangular: the diagonal carries 1x1 blocks (real
    eigenvalues) and 2x2 blocks (complex-conjugate pairs), recorded in order
    in ``block_sizes``.  No canonical rotation of the 2x2 blocks is promised.
    """
    V: np.ndarray
    T: np.ndarray
    block_sizes: tuple


def _householder_reflect(x):
    """Reflector v (normalized) such that (I - 2 v v^T) x = alpha e1."""
    v = x.copy()
    normx = np.linalg.norm(x)
    if normx == 0.0:
        return None
    v[0] += np.copysign(normx, x[0]) if x[0] != 0.0 else normx
    normv = np.linalg.norm(v)
    if normv == 0.0:
        return None
    return v / normv


def _hessenberg(A):
    """Reduce A to upper Hessenberg H with orthogonal Q: A = Q H Q^T."""
    n = A.shape[0]
    H = A.copy()
    Q = np.eye(n)
    for k in range(n - 2):
        v = _householder_reflect(H[k + 1:, k])
        if v is None:
            continue
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        Q[:, k + 1:] -= 2.0 * np.outer(Q[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H, Q


def _block_eigenvalues(a, b, c, d):
    """Eigenvalues of [[a, b], [c, d]] as a pair of python complex numbers."""
    mean = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0.0:
        root = np.sqrt(disc)
        return complex(mean + root), complex(mean - root)
    root = np.sqrt(-disc)
    return complex(mean, root), complex(mean, -root)


def _split_real_block(H, Z, p):
    """Rotate the 2x2 diagonal block at (p, p) to upper triangular form.

    Only called when the block has real eigenvalues.  Applies the rotation
    to the full rows/columns of H and accumulates it into Z.
    """
    a, b = H[p, p], H[p, p + 1]
    c, d = H[p + 1, p], H[p + 1, p + 1]
    mean = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    root = np.sqrt(max(disc, 0.0))
    # The eigenvalue of larger magnitude gives a better-conditioned vector.
    lam = mean + np.copysign(root, mean)
    # Eigenvector of the block for lam, choosing the better-scaled row.
    if abs(b) + abs(lam - a) >= abs(c) + abs(lam - d):
        vec = np.array([b, lam - a])
    else:
        vec = np.array([lam - d, c])
    nv = np.linalg.norm(vec)
    if nv == 0.0:
        # Block already triangular enough; just drop the subdiagonal.
        H[p + 1, p] = 0.0
        return
    ccos, ssin = vec[0] / nv, vec[1] / nv
    G = np.array([[ccos, -ssin], [ssin, ccos]])
    H[p:p + 2, :] = G.T @ H[p:p + 2, :]
    H[:, p:p + 2] = H[:, p:p + 2] @ G
    Z[:, p:p + 2] = Z[:, p:p + 2] @ G
    H[p + 1, p] = 0.0


def _francis_sweep(H, Z, lo, hi, shift_sum, shift_prod):
    """One implicit double-shift QR sweep on the active block [lo, hi].

    Chases the bulge created by the first column of the shifted quadratic
    through the block; transforms are applied to the full matrix rows and
    columns so that the global similarity (and the accumulated Z) stays
    exact.
    """
    x = H[lo, lo] * H[lo, lo] + H[lo, lo + 1] * H[lo + 1, lo] \
        - shift_sum * H[lo, lo] + shift_prod
    y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - shift_sum)
    z = H[lo + 2, lo + 1] * H[lo + 1, lo]
    for k in range(lo, hi - 1):
        v = _householder_reflect(np.array([x, y, z]))
        if v is not None:
            rows = slice(k, k + 3)
            col0 = max(lo, k - 1)
            H[rows, col0:] -= 2.0 * np.outer(v, v @ H[rows, col0:])
            row_end = min(hi, k + 3) + 1
            H[:row_end, rows] -= 2.0 * np.outer(H[:row_end, rows] @ v, v)
            Z[:, rows] -= 2.0 * np.outer(Z[:, rows] @ v, v)
        if k < hi - 2:
            x = H[k + 1, k]
            y = H[k + 2, k]
            z = H[k + 3, k]
    # Final 2x1 reflection on rows (hi-1, hi).
    v = _householder_reflect(np.array([H[hi - 1, hi - 2], H[hi, hi - 2]]))
    if v is not None:
        rows = slice(hi - 1, hi + 1)
        H[rows, hi - 2:] -= 2.0 * np.outer(v, v @ H[rows, hi - 2:])
        H[:hi + 1, rows] -= 2.0 * np.outer(H[:hi + 1, rows] @ v, v)
        Z[:, rows] -= 2.0 * np.outer(Z[:, rows] @ v, v)


def _subdiag_negligible(H, i, scale):
    local = abs(H[i, i]) + abs(H[i + 1, i + 1])
    if local == 0.0:
        local = scale
    return abs(H[i + 1, i]) <= QR_DEFLATE_REL * local


def _real_schur_from_hessenberg(H, Z):
    """Francis QR with deflation; H, Z mutated in place, H becomes T."""
    n = H.shape[0]
    scale = max(np.abs(H).max(), 1e-300)
    budget = QR_SWEEP_FACTOR * max(n, 1)
    sweeps = 0
    hi = n - 1
    stagnation = 0
    while hi >= 0:
        # Deflate converged trailing blocks.
        if hi == 0:
            hi -= 1
            stagnation = 0
            continue
        if _subdiag_negligible(H, hi - 1, scale):
            H[hi, hi - 1] = 0.0
            hi -= 1
            stagnation = 0
            continue
        if hi == 1 or _subdiag_negligible(H, hi - 2, scale):
            if hi >= 2:
                H[hi - 1, hi - 2] = 0.0
            lam1, _ = _block_eigenvalues(H[hi - 1, hi - 1], H[hi - 1, hi],
                                         H[hi, hi - 1], H[hi, hi])
            if lam1.imag == 0.0:
                _split_real_block(H, Z, hi - 1)
            hi -= 2
            stagnation = 0
            continue
        # Active block [lo, hi] of size >= 3.
        lo = hi - 1
        while lo > 0 and not _subdiag_negligible(H, lo - 1, scale):
            lo -= 1
        if lo > 0:
            H[lo, lo - 1] = 0.0
        sweeps += 1
        stagnation += 1
        if sweeps > budget:
            raise NoConvergence(
                f"QR iteration exceeded {budget} sweeps on a "
                f"{n}x{n} matrix")
        if stagnation % 11 == 10:
            # Ad-hoc exceptional shift to break symmetric cycling.
            s = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
            shift_sum = 1.5 * s
            shift_prod = s * s
        else:
            shift_sum = H[hi - 1, hi - 1] + H[hi, hi]
            shift_prod = H[hi - 1, hi - 1] * H[hi, hi] \
                - H[hi - 1, hi] * H[hi, hi - 1]
        _francis_sweep(H, Z, lo, hi, shift_sum, shift_prod)
        # Clear rounding dust strictly below the first subdiagonal.
        for i in range(lo + 2, hi + 1):
            H[i, :i - 1] = 0.0


def _block_sizes(T):
    n = T.shape[0]
    sizes = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            sizes.append(2)
            i += 2
        else:
            sizes.append(1)
            i += 1
    return tuple(sizes)


def real_schur(S):
    """Real Schur decomposition of a square real matrix.

    Returns a :class:`SchurResult` with ``T = V S V^T``, ``V`` orthogonal and
    ``T`` quasi-upper-triangular with 1x1/2x2 diagonal blocks.  Raises
    :class:`NoConvergence` if the QR iteration exhausts its sweep budget.
    """
    A = _as_square(S, "S")
    n = A.shape[0]
    if n == 0:
        return SchurResult(np.eye(0), np.eye(0), ())
    H, Q = _hessenberg(A)
    Z = Q  # accumulate onto the Hessenberg basis; A = Z H Z^T throughout
    _real_schur_from_hessenberg(H, Z)
    return SchurResult(V=Z.T.copy(), T=H, block_sizes=_block_sizes(H))


def eigenvalues(M):
    """Eigenvalues of a square real matrix as a list of python complex.

    Computed from the real Schur form (Hessenberg reduction plus shifted QR),
    reading 1x1 blocks directly and solving each 2x2 block in closed form.
    """
    schur = real_schur(M)
    T = schur.T
    lams = []
    i = 0
    for size in schur.block_sizes:
        if size == 1:
            lams.append(complex(T[i, i]))
        else:
            l1, l2 = _block_eigenvalues(T[i, i], T[i, i + 1],
                                        T[i + 1, i], T[i + 1, i + 1])
            lams.extend((l1, l2))
        i += size
    return lams


def spectral_radius(M):
    """max |lambda| over the eigenvalues of M."""
    lams = eigenvalues(M)
    return max((abs(l) for l in lams), default=0.0)
