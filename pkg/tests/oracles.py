"""Independent reference implementations used only by the tests."""

import math

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def expm_taylor(A, t, order=30):
    """exp(-i A t) by scaling and squaring of a truncated Taylor series."""
    X = -1j * t * np.asarray(A, dtype=complex)
    nrm = np.linalg.norm(X, 1)
    k = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0.5 else 0
    X = X / 2 ** k
    term = np.eye(X.shape[0], dtype=complex)
    out = term.copy()
    for j in range(1, order + 1):
        term = term @ X / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def metric_bloch(H, S, psi0, t):
    """Bloch vector and SP computed from S directly (no factor), via Taylor propagation."""
    U = expm_taylor(H, t)
    psi = U @ psi0
    n0 = np.vdot(psi0, S @ psi0).real
    nt = np.vdot(psi, S @ psi).real
    w, V = np.linalg.eigh(S)
    Y = (V * np.sqrt(w)) @ V.conj().T
    g = Y @ psi / math.sqrt(nt)
    bloch = [np.vdot(g, P @ g).real for P in (SX, SY, SZ)]
    sp = abs(np.vdot(psi0, S @ psi)) ** 2 / (n0 * nt)
    return bloch, sp


def commutator(A, B):
    return A @ B - B @ A


def random_unbroken(rng):
    eta = rng.uniform(-0.98, 0.98)
    s = rng.choice([-1, 1]) * rng.uniform(0.2, 3.0)
    rho = rng.uniform(-2, 2)
    return eta, s, rho


def random_broken(rng, positive_eta=False):
    a = rng.uniform(1.02, 4.0)
    eta = a if positive_eta else rng.choice([-1, 1]) * a
    s = rng.choice([-1, 1]) * rng.uniform(0.2, 3.0)
    rho = rng.uniform(-2, 2)
    return eta, s, rho


def random_ep(rng):
    eta = float(rng.choice([-1.0, 1.0]))
    s = rng.choice([-1, 1]) * rng.uniform(0.2, 3.0)
    rho = rng.uniform(-2, 2)
    return eta, s, rho


def central_difference(f, t, h=1e-4):
    return (f(t + h) - f(t - h)) / (2 * h)
