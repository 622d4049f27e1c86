"""
Lindblad master equation for the open-system counterpart of the model.

    d rho / dt = -i [h, rho] + sum_k g_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho})

Integration is classic fixed-step RK4 (see ``_kernels.rk4_lindblad``) with
the step chosen to land on every requested time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientHorizon, InvalidInitial, StepTooLarge
from .linalg import as_matrix, dagger, norm
from .model import ID2, SX, SY, SZ, ModelParams

DM_TOL = 1e-9
L_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
L_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray

    def __post_init__(self):
        try:
            r = as_matrix(self.rho, "rho")
        except ValueError as exc:
            raise InvalidInitial(str(exc)) from exc
        if norm(r - dagger(r)) > DM_TOL:
            raise InvalidInitial("density matrix is not Hermitian")
        if abs(np.trace(r) - 1.0) > DM_TOL:
            raise InvalidInitial(f"trace is {np.trace(r).real:.12f}")
        if np.linalg.eigvalsh(0.5 * (r + dagger(r))).min() < -DM_TOL:
            raise InvalidInitial("density matrix has a negative eigenvalue")
        object.__setattr__(self, "rho", r)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        """Projector onto ``psi`` normalised in the standard inner product."""
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def bloch(self):
        return tuple(float(np.trace(self.rho @ P).real) for P in (SX, SY, SZ))


@dataclass(frozen=True)
class LindbladConfig:
    h: np.ndarray
    collapse_ops: list
    rates: list

    def __post_init__(self):
        h = as_matrix(self.h, "h")
        if norm(h - dagger(h)) > 1e-10 * max(1.0, norm(h)):
            raise ValueError("h must be Hermitian")
        if len(self.collapse_ops) != len(self.rates):
            raise ValueError("one rate per collapse operator")
        if any(g < 0 or not math.isfinite(g) for g in self.rates):
            raise ValueError("rates must be finite and non-negative")
        ops = [as_matrix(L, "L") for L in self.collapse_ops]
        if any(L.shape != h.shape for L in ops):
            raise ValueError("collapse operators must match h in shape")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "collapse_ops", ops)
        object.__setattr__(self, "rates", [float(g) for g in self.rates])

    def default_dt(self) -> float:
        return 1e-3 / max(norm(self.h), max(self.rates, default=0.0), 1e-12)


def model_lindblad_config(mp: ModelParams) -> LindbladConfig:
    """``h = r cos(theta) I + s sigma_x``, ``L+- = (sigma_x +- i sigma_y)/2``, rates ``sqrt|r sin(theta)|``."""
    c, sn = mp.trig()
    h = mp.r * c * ID2 + mp.s * SX
    g = math.sqrt(abs(mp.r * sn))
    return LindbladConfig(h, [L_PLUS.copy(), L_MINUS.copy()], [g, g])


def lindblad_rhs(cfg: LindbladConfig, rho) -> np.ndarray:
    r = rho.rho if isinstance(rho, DensityMatrix) else as_matrix(rho, "rho")
    out = -1j * (cfg.h @ r - r @ cfg.h)
    for L, g in zip(cfg.collapse_ops, cfg.rates):
        LdL = dagger(L) @ L
        out = out + g * (L @ r @ dagger(L) - 0.5 * (LdL @ r + r @ LdL))
    return out


def integrate(cfg: LindbladConfig, rho0: DensityMatrix, t_grid, dt_max=None):
    """
    RK4 integration sampled on ``t_grid``.

    Parameters
    ----------
    cfg : LindbladConfig
    rho0 : DensityMatrix
        State at ``t_grid[0]``.
    t_grid : sequence of float
        Strictly increasing.
    dt_max : float, optional
        Largest step; defaults to ``cfg.default_dt()``.

    Returns
    -------
    list of (t, sx, sy, sz)

    Raises
    ------
    InvalidInitial
        If ``rho0`` is not a valid density matrix of the right size.
    StepTooLarge
        If between two grid points the trace, Hermiticity or positivity
        drifts by more than ``1e-9``.
    """
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    if rho0.rho.shape != cfg.h.shape:
        raise InvalidInitial("rho0 shape does not match h")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if dt_max is None:
        dt_max = cfg.default_dt()
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    K, A = _kernels.lindblad_generator(cfg.h, cfg.collapse_ops, cfg.rates)
    rho = rho0.rho.copy()
    out = [(float(t_grid[0]),) + _bloch(rho)]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        rho = _kernels.rk4_lindblad(K, A, rho, np.array([t0, t1]), dt_max)[-1]
        rho = _correct(rho, t1)
        out.append((float(t1),) + _bloch(rho))
    return out


def _correct(rho, t):
    if not np.all(np.isfinite(rho)):
        raise StepTooLarge(f"non-finite density matrix at t={t}")
    herm = norm(rho - dagger(rho))
    tr = np.trace(rho)
    if herm > DM_TOL or abs(tr - 1.0) > DM_TOL:
        raise StepTooLarge(f"invariant drift at t={t}: hermiticity {herm:.2e}, trace {abs(tr - 1):.2e}")
    rho = 0.5 * (rho + dagger(rho))
    rho = rho / np.trace(rho).real
    if np.linalg.eigvalsh(rho).min() < -DM_TOL:
        raise StepTooLarge(f"negative eigenvalue at t={t}")
    return rho


def _bloch(rho):
    # Tr(rho sigma) for a 2x2 rho
    return (
        float(2.0 * rho[0, 1].real),
        float(-2.0 * rho[0, 1].imag),
        float((rho[0, 0] - rho[1, 1]).real),
    )


def compare_steady_state(metric_trace, lb_trace, t_min=15.0, tol=5e-2):
    """
    Largest componentwise Bloch difference for ``t >= t_min``.

    The metric trace's times are used; the Lindblad trace is linearly
    interpolated onto them.

    Returns
    -------
    (agree, max_deviation)
    """
    mt = np.array([[sn.t, sn.sx, sn.sy, sn.sz] for sn in metric_trace.snapshots])
    lb = np.asarray(lb_trace, dtype=float)
    if mt[-1, 0] < t_min or lb[-1, 0] < t_min:
        raise InsufficientHorizon(f"traces end before t_min = {t_min}")
    sel = mt[:, 0] >= t_min
    dev = 0.0
    for j in (1, 2, 3):
        other = np.interp(mt[sel, 0], lb[:, 0], lb[:, j])
        dev = max(dev, float(np.max(np.abs(mt[sel, j] - other))))
    return dev <= tol, dev
