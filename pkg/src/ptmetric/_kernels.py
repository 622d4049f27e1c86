"""
Hot loops: batched two-level propagation and the fixed-step RK4 Lindblad
integrator.

Each kernel exists twice: a numba ``@njit`` version and a plain numpy
version with the same signature. The numba path is used when numba imports
and the environment variable ``PTMETRIC_NO_NUMBA`` is unset (or ``0``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the bundled TBB is too old for numba and only produces a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_disabled() -> bool:
    return os.environ.get("PTMETRIC_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    """Cap the numba worker pool; a no-op on the numpy path."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# two-level grid: Bloch vector, UR(sigma_x, sigma_y) and SP
#
# Inputs describe exp(-iHt) = P exp(-iJt) P^{-1}, with J diagonal (E) plus
# unit superdiagonal entries where sup[k] == 1. The propagated vector is
# rescaled by exp(-max_k Im(E_k) t) before normalising, so nothing overflows.
# Output columns: sx, sy, sz, ur, sp. A vanishing metric norm gives NaN.


def _bloch_grid_numpy(P, Pinv, E, sup, G, psi0s, times):
    psi0s = np.ascontiguousarray(psi0s, dtype=np.complex128)
    times = np.asarray(times, dtype=np.float64)
    M, T = psi0s.shape[0], times.shape[0]
    c = psi0s @ Pinv.T  # (M, 2)
    a = psi0s @ G.T
    with np.errstate(invalid="ignore", divide="ignore"):
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
    shift = np.max(E.imag[None, :] * times[:, None], axis=1)  # (T,)
    ph = np.exp(-1j * E[None, :] * times[:, None] - shift[:, None])  # (T, 2)
    w = ph[None, :, :] * c[:, None, :]  # (M, T, 2)
    if sup[0]:
        w[:, :, 0] += ph[None, :, 0] * (-1j * times[None, :]) * c[:, None, 1]
    v = w @ P.T
    b = v @ G.T
    nb = np.linalg.norm(b, axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = b / nb[:, :, None]
    b0, b1 = b[:, :, 0], b[:, :, 1]
    x = np.conj(b0) * b1
    out = np.empty((M, T, 5))
    out[:, :, 0] = 2.0 * x.real
    out[:, :, 1] = 2.0 * x.imag
    out[:, :, 2] = np.abs(b0) ** 2 - np.abs(b1) ** 2
    sx, sy, sz = out[:, :, 0], out[:, :, 1], out[:, :, 2]
    out[:, :, 3] = (1.0 - sx * sx) * (1.0 - sy * sy) - sz * sz
    ov = np.conj(a[:, None, 0]) * b0 + np.conj(a[:, None, 1]) * b1
    out[:, :, 4] = np.abs(ov) ** 2
    return out


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _bloch_grid_numba(P, Pinv, E, sup, G, psi0s, times):
        M = psi0s.shape[0]
        T = times.shape[0]
        out = np.empty((M, T, 5))
        for m in prange(M):
            p0 = psi0s[m, 0]
            p1 = psi0s[m, 1]
            c0 = Pinv[0, 0] * p0 + Pinv[0, 1] * p1
            c1 = Pinv[1, 0] * p0 + Pinv[1, 1] * p1
            a0 = G[0, 0] * p0 + G[0, 1] * p1
            a1 = G[1, 0] * p0 + G[1, 1] * p1
            na = np.sqrt(abs(a0) ** 2 + abs(a1) ** 2)
            a0 /= na
            a1 /= na
            for k in range(T):
                t = times[k]
                shift = max(E[0].imag * t, E[1].imag * t)
                e0 = np.exp(-1j * E[0] * t - shift)
                e1 = np.exp(-1j * E[1] * t - shift)
                w0 = e0 * c0
                w1 = e1 * c1
                if sup[0]:
                    w0 += e0 * (-1j * t) * c1
                v0 = P[0, 0] * w0 + P[0, 1] * w1
                v1 = P[1, 0] * w0 + P[1, 1] * w1
                b0 = G[0, 0] * v0 + G[0, 1] * v1
                b1 = G[1, 0] * v0 + G[1, 1] * v1
                nb = np.sqrt(abs(b0) ** 2 + abs(b1) ** 2)
                if nb == 0.0:
                    for j in range(5):
                        out[m, k, j] = np.nan
                    continue
                b0 /= nb
                b1 /= nb
                x = np.conj(b0) * b1
                sx = 2.0 * x.real
                sy = 2.0 * x.imag
                sz = abs(b0) ** 2 - abs(b1) ** 2
                out[m, k, 0] = sx
                out[m, k, 1] = sy
                out[m, k, 2] = sz
                out[m, k, 3] = (1.0 - sx * sx) * (1.0 - sy * sy) - sz * sz
                out[m, k, 4] = abs(np.conj(a0) * b0 + np.conj(a1) * b1) ** 2
        return out

else:  # pragma: no cover
    _bloch_grid_numba = None


def bloch_grid(P, Pinv, E, sup, G, psi0s, times):
    """
    Bloch components, UR and SP for many initial states and times.

    Parameters
    ----------
    P, Pinv : (2, 2) complex arrays
        Jordan basis of ``H`` and its inverse.
    E : (2,) complex array
        Diagonal of the Jordan form.
    sup : (2,) int array
        ``sup[0] == 1`` marks a 2x2 Jordan block.
    G : (2, 2) complex array
        Metric factor ``Upsilon``.
    psi0s : (M, 2) complex array
    times : (T,) float array

    Returns
    -------
    ndarray, shape (M, T, 5)
        Columns ``sx, sy, sz, ur, sp``.
    """
    args = (
        np.ascontiguousarray(P, dtype=np.complex128),
        np.ascontiguousarray(Pinv, dtype=np.complex128),
        np.ascontiguousarray(E, dtype=np.complex128),
        np.ascontiguousarray(sup, dtype=np.int64),
        np.ascontiguousarray(G, dtype=np.complex128),
        np.ascontiguousarray(psi0s, dtype=np.complex128),
        np.ascontiguousarray(times, dtype=np.float64),
    )
    if USE_NUMBA:
        return _bloch_grid_numba(*args)
    return _bloch_grid_numpy(*args)


# ---------------------------------------------------------------------------
# Lindblad RK4
#
# With K = -i h - 1/2 sum_k g_k L_k^dag L_k and A_k = sqrt(g_k) L_k the
# generator is  rho -> K rho + rho K^dag + sum_k A_k rho A_k^dag.
# Between consecutive grid points the step is the largest dt <= dt_max that
# lands exactly on the next point.


def _steps(t0, t1, dt_max):
    n = int(np.ceil((t1 - t0) / dt_max - 1e-12))
    return max(n, 1)


def _rhs_numpy(K, A, rho):
    out = K @ rho
    out += out.conj().T
    for k in range(A.shape[0]):
        out += A[k] @ rho @ A[k].conj().T
    return out


def _rk4_numpy(K, A, rho0, t_grid, dt_max):
    T = t_grid.shape[0]
    out = np.empty((T,) + rho0.shape, dtype=np.complex128)
    rho = rho0.copy()
    out[0] = rho
    for i in range(1, T):
        n = _steps(t_grid[i - 1], t_grid[i], dt_max)
        dt = (t_grid[i] - t_grid[i - 1]) / n
        for _ in range(n):
            k1 = _rhs_numpy(K, A, rho)
            k2 = _rhs_numpy(K, A, rho + 0.5 * dt * k1)
            k3 = _rhs_numpy(K, A, rho + 0.5 * dt * k2)
            k4 = _rhs_numpy(K, A, rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i] = rho
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _rhs_numba(K, A, rho, out, tmp):
        n = rho.shape[0]
        for i in range(n):
            for j in range(n):
                acc = 0j
                for l in range(n):
                    acc += K[i, l] * rho[l, j]
                tmp[i, j] = acc
        for i in range(n):
            for j in range(n):
                out[i, j] = tmp[i, j] + np.conj(tmp[j, i])
        for k in range(A.shape[0]):
            for i in range(n):
                for j in range(n):
                    acc = 0j
                    for l in range(n):
                        acc += A[k, i, l] * rho[l, j]
                    tmp[i, j] = acc
            for i in range(n):
                for j in range(n):
                    acc = 0j
                    for l in range(n):
                        acc += tmp[i, l] * np.conj(A[k, j, l])
                    out[i, j] += acc

    @njit(cache=True)
    def _rk4_numba(K, A, rho0, t_grid, dt_max):
        T = t_grid.shape[0]
        n = rho0.shape[0]
        out = np.empty((T, n, n), dtype=np.complex128)
        rho = rho0.copy()
        out[0] = rho
        k1 = np.empty_like(rho)
        k2 = np.empty_like(rho)
        k3 = np.empty_like(rho)
        k4 = np.empty_like(rho)
        y = np.empty_like(rho)
        tmp = np.empty_like(rho)
        for i in range(1, T):
            nsteps = int(np.ceil((t_grid[i] - t_grid[i - 1]) / dt_max - 1e-12))
            if nsteps < 1:
                nsteps = 1
            dt = (t_grid[i] - t_grid[i - 1]) / nsteps
            for _ in range(nsteps):
                _rhs_numba(K, A, rho, k1, tmp)
                for a in range(n):
                    for b in range(n):
                        y[a, b] = rho[a, b] + 0.5 * dt * k1[a, b]
                _rhs_numba(K, A, y, k2, tmp)
                for a in range(n):
                    for b in range(n):
                        y[a, b] = rho[a, b] + 0.5 * dt * k2[a, b]
                _rhs_numba(K, A, y, k3, tmp)
                for a in range(n):
                    for b in range(n):
                        y[a, b] = rho[a, b] + dt * k3[a, b]
                _rhs_numba(K, A, y, k4, tmp)
                for a in range(n):
                    for b in range(n):
                        rho[a, b] += (dt / 6.0) * (
                            k1[a, b] + 2.0 * k2[a, b] + 2.0 * k3[a, b] + k4[a, b]
                        )
            out[i] = rho
        return out

else:  # pragma: no cover
    _rk4_numba = None


def lindblad_generator(h, collapse_ops, rates):
    """Return ``(K, A)`` with ``K = -i h - 1/2 sum g L^dag L`` and ``A_k = sqrt(g_k) L_k``."""
    h = np.asarray(h, dtype=np.complex128)
    n = h.shape[0]
    K = -1j * h
    A = np.zeros((len(collapse_ops), n, n), dtype=np.complex128)
    for k, (L, g) in enumerate(zip(collapse_ops, rates)):
        L = np.asarray(L, dtype=np.complex128)
        K = K - 0.5 * g * (L.conj().T @ L)
        A[k] = np.sqrt(g) * L
    return np.ascontiguousarray(K), A


def rk4_lindblad(K, A, rho0, t_grid, dt_max):
    """Density matrices at every point of ``t_grid`` (first entry is ``rho0``)."""
    args = (
        np.ascontiguousarray(K, dtype=np.complex128),
        np.ascontiguousarray(A, dtype=np.complex128),
        np.ascontiguousarray(rho0, dtype=np.complex128),
        np.ascontiguousarray(t_grid, dtype=np.float64),
        float(dt_max),
    )
    if USE_NUMBA:
        return _rk4_numba(*args)
    return _rk4_numpy(*args)
