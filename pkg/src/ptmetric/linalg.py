"""
Dense complex linear algebra for small square matrices.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``. The
two-level case is handled with closed-form trace/determinant formulas so that
results stay exact close to exceptional points; larger matrices go through
LAPACK.

Eigenvectors follow a fixed gauge: each column is scaled so that its
largest-modulus entry is real and positive, then normalised to unit Euclidean
length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonConvergence,
    NotHermitian,
    NotPositiveDefinite,
    UnsupportedJordanStructure,
)

# Relative eigenvalue-gap tolerance for calling two eigenvalues coincident.
# Rounding alone splits a 2-fold EP by ~sqrt(eps)*|A| ~ 1.5e-8 |A|, so the
# band has to sit well above that.
GAP_TOL = 2e-5
# Two unit eigenvectors with |<v1|v2>| above 1 - ALIGN_TOL are parallel.
ALIGN_TOL = 1e-8
RESIDUAL_TOL = 1e-10
_TINY = 1e-300


def as_matrix(A, name="A") -> np.ndarray:
    """Return ``A`` as a square, finite complex128 array."""
    M = np.asarray(A, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_vector(v, name="v") -> np.ndarray:
    x = np.asarray(v, dtype=np.complex128)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def norm(A) -> float:
    """Spectral norm."""
    A = np.asarray(A)
    if A.shape == (2, 2):
        # largest singular value from the Frobenius norm and |det|
        f = float(np.sum(A.real ** 2 + A.imag ** 2))
        d = abs(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
        return math.sqrt(0.5 * (f + math.sqrt(max(f * f - 4.0 * d * d, 0.0))))
    return float(np.linalg.norm(A, 2))


def dagger(A) -> np.ndarray:
    return np.conj(np.transpose(A))


def inner(x, y, S=None) -> complex:
    """``<x|S y>``, conjugate-linear in ``x``; ``S=None`` is the standard product."""
    x = np.asarray(x)
    y = np.asarray(y)
    if S is None:
        return complex(np.vdot(x, y))
    return complex(np.vdot(x, np.asarray(S) @ y))


def fix_gauge(v) -> np.ndarray:
    """Largest-modulus entry real positive, then unit norm."""
    v = np.asarray(v, dtype=np.complex128)
    k = int(np.argmax(np.abs(v)))
    pivot = v[k]
    if pivot == 0:
        raise ValueError("cannot gauge-fix the zero vector")
    v = v * (abs(pivot) / pivot)
    return v / np.linalg.norm(v)


def _sort_key(z):
    return (round(z.real, 12), round(z.imag, 12), z.real, z.imag)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    is_defective: bool


@dataclass(frozen=True)
class JordanDecomposition:
    P: np.ndarray
    J: np.ndarray
    block_sizes: tuple

    def reconstruct(self) -> np.ndarray:
        return self.P @ self.J @ np.linalg.inv(self.P)


def _gauge2(x, y):
    """``fix_gauge`` for a 2-vector given as two Python complex numbers."""
    ax, ay = abs(x), abs(y)
    pivot = x if ax >= ay else y
    n = math.sqrt(ax * ax + ay * ay)
    if n == 0.0:
        raise ValueError("cannot gauge-fix the zero vector")
    ph = abs(pivot) / pivot / n
    return x * ph, y * ph


def _eig2(A):
    """Closed-form eigenpairs of a 2x2 matrix (unsorted, gauge-fixed)."""
    a, b = complex(A[0, 0]), complex(A[0, 1])
    c, d = complex(A[1, 0]), complex(A[1, 1])
    m = 0.5 * (a + d)
    q = 0.5 * (a - d)
    bc = b * c
    sq = (q * q + bc) ** 0.5
    scale = max(abs(a), abs(b), abs(c), abs(d), _TINY)
    vals = []
    cols = []
    for sign in (-1.0, 1.0):
        r = sign * sq
        # E - a = r - q and E - d = r + q; pick the cancellation-free form
        if abs(r + q) >= abs(r - q):
            e_d = r + q
            e_a = bc / e_d if e_d != 0 else 0j
        else:
            e_a = r - q
            e_d = bc / e_a if e_a != 0 else 0j
        n1 = math.hypot(abs(b), abs(e_a))
        n2 = math.hypot(abs(e_d), abs(c))
        if max(n1, n2) <= 1e-14 * scale:
            # A - E is numerically zero: any vector works, keep the basis
            v = (1 + 0j, 0j) if sign < 0 else (0j, 1 + 0j)
        elif n1 >= n2:
            v = _gauge2(b, e_a)
        else:
            v = _gauge2(e_d, c)
        vals.append(m + r)
        cols.append(v)
    vecs = np.array([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]], dtype=np.complex128)
    return np.array(vals, dtype=np.complex128), vecs


def _coincident_aligned(vals, vecs, tol):
    n = len(vals)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) <= tol:
                overlap = abs(np.vdot(vecs[:, i], vecs[:, j]))
                if overlap > 1.0 - ALIGN_TOL:
                    pairs.append((i, j))
    return pairs


def default_gap_tol(A) -> float:
    return GAP_TOL * max(norm(A), _TINY)


def eigendecompose(A, tol=None) -> EigenDecomposition:
    """
    Right eigenvalues and gauge-fixed eigenvectors of ``A``.

    Parameters
    ----------
    A : array_like
        Square complex matrix.
    tol : float, optional
        Absolute eigenvalue-coincidence tolerance used for the defectiveness
        test. Defaults to ``GAP_TOL * ||A||``.

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted by (real, imag) ascending. ``is_defective`` is set
        when two eigenvalues coincide within ``tol`` and their eigenvectors
        are parallel.

    Raises
    ------
    NonConvergence
        If an eigenpair residual exceeds ``1e-10 * ||A||`` for a
        non-defective matrix.
    """
    A = as_matrix(A)
    nA = norm(A)
    if tol is None:
        tol = GAP_TOL * max(nA, _TINY)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if A.shape[0] == 1:
        return EigenDecomposition(np.array([A[0, 0]]), np.ones((1, 1), complex), False)
    if A.shape[0] == 2:
        vals, vecs = _eig2(A)
    else:
        try:
            vals, vecs = np.linalg.eig(A)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise NonConvergence(str(exc)) from exc
        vecs = np.column_stack([fix_gauge(vecs[:, k]) for k in range(vecs.shape[1])])
    order = sorted(range(len(vals)), key=lambda k: _sort_key(vals[k]))
    vals = np.asarray(vals)[order]
    vecs = vecs[:, order]
    defective = bool(_coincident_aligned(vals, vecs, tol))
    if not defective:
        res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
        if np.any(res > RESIDUAL_TOL * max(nA, _TINY)):
            raise NonConvergence(
                f"eigenpair residual {res.max():.3e} exceeds {RESIDUAL_TOL:g}*||A||"
            )
    return EigenDecomposition(vals, vecs, defective)


def jordan_2x2(A, tol=None, force_block=False) -> JordanDecomposition:
    """
    Analytic Jordan form of a 2x2 matrix.

    The eigenvalue gap is read off the discriminant; below ``tol`` the matrix
    is treated as a single 2x2 block built from a chain ``(N w, w)`` with
    ``N = A - m I`` and ``w`` the basis vector that ``N`` moves the most.
    A block that reconstructs ``A`` worse than the diagonal form is replaced
    by the diagonal form unless ``force_block`` is set.
    """
    A = as_matrix(A)
    if A.shape != (2, 2):
        raise ValueError("jordan_2x2 needs a 2x2 matrix")
    nA = max(norm(A), _TINY)
    if tol is None:
        tol = GAP_TOL * nA
    m = 0.5 * (A[0, 0] + A[1, 1])
    q = 0.5 * (A[0, 0] - A[1, 1])
    gap = 2.0 * abs(np.sqrt(q * q + A[0, 1] * A[1, 0]))
    Nm = A - m * np.eye(2)
    if np.abs(Nm).max() <= 1e-13 * nA:
        return JordanDecomposition(np.eye(2, dtype=complex), np.diag(np.diag(A)), (1, 1))
    diag = None
    if gap > 0:
        vals, vecs = _eig2(A)
        order = sorted(range(2), key=lambda k: _sort_key(vals[k]))
        P = vecs[:, order]
        if abs(np.vdot(P[:, 0], P[:, 1])) < 1.0 - 1e-15:
            diag = JordanDecomposition(P, np.diag(vals[order]), (1, 1))
            if gap > tol and abs(np.vdot(P[:, 0], P[:, 1])) <= 1.0 - ALIGN_TOL:
                return diag
    j = int(np.argmax(np.linalg.norm(Nm, axis=0)))
    w = np.zeros(2, dtype=np.complex128)
    w[j] = 1.0
    P = np.column_stack([Nm @ w, w])
    J = np.array([[m, 1.0], [0.0, m]], dtype=np.complex128)
    block = JordanDecomposition(P, J, (2,))
    if diag is None or force_block:
        return block
    # Inside the coincidence window the block is off by O(gap^2); keep it
    # only while that stays at rounding level.
    res_block = norm(A - block.reconstruct())
    if res_block <= 1e-10 * nA or res_block <= norm(A - diag.reconstruct()):
        return block
    return diag


def jordan_decompose(A, tol=None, force_block=False) -> JordanDecomposition:
    """
    Jordan form with blocks of size at most 2.

    Exact for 2x2 input (delegates to :func:`jordan_2x2`). For larger
    matrices, each coincident pair with parallel eigenvectors becomes one
    2x2 block whose generalized vector is the minimum-norm solution of
    ``(A - E) w2 = w1``.
    """
    A = as_matrix(A)
    if A.shape[0] == 2:
        return jordan_2x2(A, tol, force_block)
    nA = max(norm(A), _TINY)
    if tol is None:
        tol = GAP_TOL * nA
    ed = eigendecompose(A, tol)
    if not ed.is_defective:
        return JordanDecomposition(ed.right_vectors, np.diag(ed.eigenvalues), (1,) * len(ed.eigenvalues))
    pairs = _coincident_aligned(ed.eigenvalues, ed.right_vectors, tol)
    used = [k for pair in pairs for k in pair]
    if len(used) != len(set(used)):
        raise UnsupportedJordanStructure("eigenvalue cluster larger than two")
    n = A.shape[0]
    cols, diag, sup, sizes = [], [], [], []
    paired = {i: j for i, j in pairs}
    skip = {j for _, j in pairs}
    for k in range(n):
        if k in skip:
            continue
        if k in paired:
            E = 0.5 * (ed.eigenvalues[k] + ed.eigenvalues[paired[k]])
            Nm = A - E * np.eye(n)
            _, _, vh = np.linalg.svd(Nm)
            w1 = fix_gauge(vh[-1].conj())
            w2 = np.linalg.lstsq(Nm, w1, rcond=None)[0]
            cols += [w1, w2]
            diag += [E, E]
            sup += [1.0, 0.0]
            sizes.append(2)
        else:
            cols.append(ed.right_vectors[:, k])
            diag.append(ed.eigenvalues[k])
            sup.append(0.0)
            sizes.append(1)
    P = np.column_stack(cols)
    J = np.diag(np.array(diag, dtype=complex)) + np.diag(np.array(sup[:-1], dtype=complex), 1)
    jd = JordanDecomposition(P, J, tuple(sizes))
    if norm(A - jd.reconstruct()) > 1e-8 * nA:
        raise UnsupportedJordanStructure("Jordan reconstruction failed; chain longer than 2?")
    return jd


def hermitian_sqrt_factor(S, tol=1e-10) -> np.ndarray:
    """
    The Hermitian positive-definite square root of ``S`` (so ``S = Y^† Y``).

    ``tol`` is relative to ``||S||`` for both the Hermiticity check and the
    positivity threshold.
    """
    S = as_matrix(S, "S")
    nS = max(norm(S), _TINY)
    if norm(S - dagger(S)) > tol * nS:
        raise NotHermitian(f"||S - S^dag|| = {norm(S - dagger(S)):.3e}")
    w, V = np.linalg.eigh(0.5 * (S + dagger(S)))
    if w.min() <= tol * nS:
        raise NotPositiveDefinite(f"smallest eigenvalue {w.min():.3e}")
    Y = (V * np.sqrt(w)) @ dagger(V)
    return 0.5 * (Y + dagger(Y))


def exp_jordan_block(E, size, t) -> np.ndarray:
    """exp(-i J t) for one Jordan block (size 1 or 2) with eigenvalue ``E``."""
    phase = np.exp(-1j * E * t)
    if size == 1:
        return np.array([[phase]])
    return phase * np.array([[1.0, -1j * t], [0.0, 1.0]])


def matrix_exponential(A, t) -> np.ndarray:
    """
    ``exp(-i A t)`` (hbar = 1).

    Diagonalizable input goes through the eigendecomposition; defective input
    through the Jordan form, using ``exp(-iJt) = e^{-iEt} (I - i t N)`` on each
    2x2 block.
    """
    A = as_matrix(A)
    t = float(t)
    ed = eigendecompose(A)
    if not ed.is_defective:
        V = ed.right_vectors
        return V @ np.diag(np.exp(-1j * ed.eigenvalues * t)) @ np.linalg.inv(V)
    jd = jordan_decompose(A)
    n = A.shape[0]
    E = np.zeros((n, n), dtype=complex)
    k = 0
    for size in jd.block_sizes:
        E[k:k + size, k:k + size] = exp_jordan_block(jd.J[k, k], size, t)
        k += size
    return jd.P @ E @ np.linalg.inv(jd.P)
