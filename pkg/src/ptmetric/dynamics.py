"""
Metric-consistent time evolution and the observables built on it.

Two independent layers live here:

* a numeric layer that works for any ``H`` and :class:`MetricOperator`
  (:func:`evolve`, :func:`expectation`, :func:`uncertainty_gap`,
  :func:`survival_probability`, :func:`rotated_frame_check`), plus a batched
  two-level fast path (:func:`numeric_trace`, :func:`bloch_grid_model`);
* closed-form oracles for the two-level model (:func:`closed_form_snapshot`,
  :func:`asymptotic_sp`).

States are normalised under the metric at every time, ``<psi|S|psi> = 1``,
and expectation values are ``<Y psi| o |Y psi>`` with ``Y`` the metric factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateDirection,
    NoLimit,
    NonPositiveNormalization,
    NonRealExpectation,
    ZeroNorm,
)
from .linalg import as_matrix, as_vector, eigendecompose, jordan_decompose, norm
from .metric import MetricBuildOptions, MetricOperator, SpectralRegime, build_metric
from .model import (
    SX,
    SY,
    SZ,
    ModelParams,
    PreparedState,
    derive,
    hamiltonian,
    initial_state,
)

IMAG_DISCARD = 1e-8
BLOCH_TOL = 1e-6
RATIO_SWITCH = 30.0


@dataclass(frozen=True)
class EvolvedState:
    amplitudes: np.ndarray
    t: float
    norm_factor: float


@dataclass(frozen=True)
class Snapshot:
    t: float
    sx: float
    sy: float
    sz: float
    var_x: float
    var_y: float
    ur_gap: float
    sp: float
    theta_s: float
    varphi_s: float

    @property
    def bloch(self):
        return np.array([self.sx, self.sy, self.sz])


@dataclass(frozen=True)
class Trace:
    snapshots: list
    params: ModelParams
    state0: PreparedState
    regime: SpectralRegime

    def __post_init__(self):
        ts = [sn.t for sn in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trace times must be strictly increasing")

    @property
    def times(self):
        return np.array([sn.t for sn in self.snapshots])

    def column(self, name):
        return np.array([getattr(sn, name) for sn in self.snapshots])


# ---------------------------------------------------------------------------
# propagation


@dataclass(frozen=True)
class Propagator:
    """
    ``exp(-iHt)`` from a Jordan basis, applied with an exponent shift.

    ``apply`` returns ``(v, shift)`` with ``exp(-iHt) psi = exp(shift) v``;
    the shift is the largest growth exponent ``max_k Im(E_k) t`` so ``v``
    stays finite for any ``t``.
    """

    P: np.ndarray
    Pinv: np.ndarray
    E: np.ndarray
    sup: np.ndarray = field(repr=False)

    @classmethod
    def from_hamiltonian(cls, H, tol=None) -> "Propagator":
        H = as_matrix(H, "H")
        ed = eigendecompose(H, tol)
        if not ed.is_defective:
            P, E = ed.right_vectors, ed.eigenvalues
            sup = np.zeros(len(E), dtype=np.int64)
        else:
            jd = jordan_decompose(H, tol)
            P, E = jd.P, np.diag(jd.J).copy()
            sup = np.zeros(len(E), dtype=np.int64)
            sup[:-1] = (np.abs(np.diag(jd.J, 1)) > 0.5).astype(np.int64)
        return cls(P, np.linalg.inv(P), E, sup)

    def apply(self, psi, t):
        c = self.Pinv @ psi
        shift = float(np.max(self.E.imag * t))
        ph = np.exp(-1j * self.E * t - shift)
        w = ph * c
        for k in np.flatnonzero(self.sup):
            w[k] += ph[k] * (-1j * t) * c[k + 1]
        return self.P @ w, shift


def evolve(H, m: MetricOperator, psi0, t, propagator: Propagator | None = None) -> EvolvedState:
    """
    Evolve ``psi0`` to time ``t`` and renormalise under the metric.

    Parameters
    ----------
    H : (N, N) complex array
    m : MetricOperator
    psi0 : (N,) complex array
    t : float
    propagator : Propagator, optional
        Reuse a precomputed decomposition of ``H`` (e.g. along a time grid).

    Returns
    -------
    EvolvedState
        ``amplitudes = N(t) exp(-iHt) psi0`` with ``<amplitudes|S|amplitudes> = 1``.
        ``norm_factor`` is ``N(t)``; it may over/underflow to ``inf``/``0`` at
        extreme times even though the amplitudes stay finite.

    Raises
    ------
    ZeroNorm
        If ``psi0`` or the evolved vector has numerically vanishing metric norm.
    """
    psi0 = as_vector(psi0, "psi0")
    if propagator is None:
        propagator = Propagator.from_hamiltonian(H)
    v, shift = propagator.apply(psi0, float(t))
    gv = m.Upsilon @ v
    nrm = float(np.linalg.norm(gv))
    scale = norm(m.Upsilon) * float(np.linalg.norm(v))
    if not np.isfinite(nrm) or nrm <= 1e-14 * scale or nrm == 0.0:
        raise ZeroNorm(f"metric norm of evolved state vanishes at t={t}")
    log_n = -shift - math.log(nrm)
    norm_factor = math.exp(log_n) if log_n < 709.0 else math.inf
    return EvolvedState(v / nrm, float(t), norm_factor)


# ---------------------------------------------------------------------------
# observables


def _raw(state: EvolvedState, m: MetricOperator, obs) -> complex:
    g = m.Upsilon @ state.amplitudes
    return complex(np.vdot(g, obs @ g))


def expectation(state: EvolvedState, m: MetricOperator, obs) -> float:
    """``<Y psi| obs |Y psi>`` as a real number."""
    obs = as_matrix(obs, "obs")
    val = _raw(state, m, obs)
    if abs(val.imag) > IMAG_DISCARD * max(1.0, norm(obs)):
        raise NonRealExpectation(f"imaginary part {val.imag:.3e}")
    return val.real


def variance(state: EvolvedState, m: MetricOperator, obs) -> float:
    obs = as_matrix(obs, "obs")
    return expectation(state, m, obs @ obs) - expectation(state, m, obs) ** 2


def uncertainty_gap(state: EvolvedState, m: MetricOperator, A, B, C=None) -> float:
    """
    Robertson gap ``Var(A) Var(B) - |<C>|^2 / 4``.

    ``C`` is the commutator matrix ``AB - BA``; it is formed from ``A`` and
    ``B`` when omitted. For ``A, B = sigma_x, sigma_y`` this is
    ``Var(sx) Var(sy) - <sz>^2``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if C is None:
        C = A @ B - B @ A
    c = _raw(state, m, as_matrix(C, "C"))
    return variance(state, m, A) * variance(state, m, B) - 0.25 * abs(c) ** 2


def survival_probability(psi0: EvolvedState, psit: EvolvedState, m: MetricOperator) -> float:
    """``|<psi0|S|psit>|^2``."""
    ov = m.inner(psi0.amplitudes, psit.amplitudes)
    return abs(ov) ** 2


def angles(sx, sy, sz):
    """Polar and azimuthal angle of a Bloch vector; azimuth in (-pi, pi]."""
    theta = math.acos(min(1.0, max(-1.0, sz)))
    if sx == 0.0 and sy == 0.0:
        return theta, 0.0
    phi = math.atan2(sy, sx)
    if phi == -math.pi:
        phi = math.pi
    return theta, phi


def bloch_angles(snapshot: Snapshot):
    return angles(snapshot.sx, snapshot.sy, snapshot.sz)


def _frame(n):
    """Unit vectors completing ``n`` to a right-handed frame."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, n)
    x /= np.linalg.norm(x)
    return x, np.cross(n, x)


def rotated_frame_check(state: EvolvedState, m: MetricOperator):
    """
    Variances of the spin components perpendicular to the mean spin.

    Returns
    -------
    (var_x', var_y', product)
        For a metric-normalised two-level state each is 1.

    Raises
    ------
    DegenerateDirection
        If ``|<sigma>|`` differs from 1 by more than ``1e-6``.
    """
    n = np.array([expectation(state, m, P) for P in (SX, SY, SZ)])
    length = float(np.linalg.norm(n))
    if abs(length - 1.0) > BLOCH_TOL:
        raise DegenerateDirection(f"|<sigma>| = {length:.9f}")
    x, y = _frame(n / length)
    sig_x = x[0] * SX + x[1] * SY + x[2] * SZ
    sig_y = y[0] * SX + y[1] * SY + y[2] * SZ
    vx = variance(state, m, sig_x)
    vy = variance(state, m, sig_y)
    return vx, vy, vx * vy


def numeric_snapshot(H, m: MetricOperator, psi0, t, propagator=None) -> Snapshot:
    """All Snapshot fields from :func:`evolve` and the generic observables."""
    if propagator is None:
        propagator = Propagator.from_hamiltonian(H)
    st0 = evolve(H, m, psi0, 0.0, propagator)
    st = evolve(H, m, psi0, t, propagator)
    sx, sy, sz = (expectation(st, m, P) for P in (SX, SY, SZ))
    vx, vy = variance(st, m, SX), variance(st, m, SY)
    ur = uncertainty_gap(st, m, SX, SY)
    sp = survival_probability(st0, st, m)
    th, ph = angles(sx, sy, sz)
    return Snapshot(float(t), sx, sy, sz, vx, vy, ur, sp, th, ph)


def _snapshot_from_row(t, row) -> Snapshot:
    sx, sy, sz, ur, sp = (float(v) for v in row)
    th, ph = angles(sx, sy, sz)
    return Snapshot(float(t), sx, sy, sz, 1.0 - sx * sx, 1.0 - sy * sy, ur, sp, th, ph)


# ---------------------------------------------------------------------------
# two-level batched path


def _model_setup(mp: ModelParams, opts: MetricBuildOptions | None = None, m=None):
    H = hamiltonian(mp)
    if m is None:
        m = build_metric(H, opts)
    prop = Propagator.from_hamiltonian(H)
    return H, m, prop


def bloch_grid_model(mp: ModelParams, states, times, opts=None, m=None) -> np.ndarray:
    """
    ``(sx, sy, sz, ur, sp)`` for every prepared state and time.

    Parameters
    ----------
    states : sequence of PreparedState or (M, 2) complex array
    times : sequence of float

    Returns
    -------
    ndarray, shape (M, T, 5)
    """
    _, m, prop = _model_setup(mp, opts, m)
    if isinstance(states, np.ndarray) and states.ndim == 2:
        psi = states
    else:
        psi = np.array([initial_state(ps) for ps in states])
    out = _kernels.bloch_grid(prop.P, prop.Pinv, prop.E, prop.sup, m.Upsilon, psi, np.asarray(times, float))
    if np.isnan(out).any():
        raise ZeroNorm("metric norm of an evolved state vanished on the grid")
    return out


def default_time_grid(mp: ModelParams, n: int = 400) -> np.ndarray:
    """Uniform grid on ``[0, 20 / max(lambda, |s|, 1e-3)]``."""
    dp = derive(mp)
    return np.linspace(0.0, 20.0 / max(dp.lam, abs(mp.s), 1e-3), n)


def numeric_trace(mp: ModelParams, ps: PreparedState, times=None, opts=None) -> Trace:
    if times is None:
        times = default_time_grid(mp)
    times = np.asarray(times, float)
    H, m, _ = _model_setup(mp, opts)
    rows = bloch_grid_model(mp, [ps], times, m=m)[0]
    snaps = [_snapshot_from_row(t, r) for t, r in zip(times, rows)]
    return Trace(snaps, mp, ps, m.regime)


def closed_form_trace(mp: ModelParams, ps: PreparedState, times=None) -> Trace:
    if times is None:
        times = default_time_grid(mp)
    snaps = [closed_form_snapshot(mp, ps, float(t)) for t in times]
    return Trace(snaps, mp, ps, derive(mp).regime)


# ---------------------------------------------------------------------------
# closed forms


def _coefficients(mp: ModelParams, ps: PreparedState):
    dp = derive(mp)
    eta = dp.eta
    if dp.regime is SpectralRegime.EP:
        eta = math.copysign(1.0, eta)
    p, phi = ps.p, ps.phi
    sphi, cphi = math.sin(phi), math.cos(phi)
    k = math.sqrt(abs(1.0 - eta * eta))
    A = (1.0 + p * p) * eta + 2.0 * p * sphi
    B = k * (1.0 - p * p)
    D = 1.0 + p * p + 2.0 * p * eta * sphi
    return dp, eta, p, sphi, cphi, k, A, B, D


def _finish(t, sx, sy, sz, sp) -> Snapshot:
    vx, vy = 1.0 - sx * sx, 1.0 - sy * sy
    th, ph = angles(sx, sy, sz)
    return Snapshot(float(t), sx, sy, sz, vx, vy, vx * vy - sz * sz, sp, th, ph)


def _broken_terms(A, B, u):
    """
    ``(den, rc, rs)`` with ``A cosh u + B sinh u = e^{|u|} den / 2`` and
    ``rc, rs`` such that ``cosh u = e^{|u|} rc / 2``, ``sinh u = e^{|u|} rs / 2``.
    """
    x = math.exp(-2.0 * abs(u))
    sg = 1.0 if u >= 0 else -1.0
    rc, rs = 1.0 + x, sg * (1.0 - x)
    return A * rc + B * rs, rc, rs


def closed_form_snapshot(mp: ModelParams, ps: PreparedState, t: float) -> Snapshot:
    """
    Snapshot from the closed-form expressions for the regime of ``mp``.

    The time dependence enters through the signed frequency
    ``w = s sqrt|1 - eta^2|`` (``tau = s t`` at the EP). In the broken phase
    the hyperbolic functions switch to a ratio form once ``2|w|t > 30``.

    Raises
    ------
    NonPositiveNormalization
        If the normalisation denominator is not positive (broken phase with
        ``eta < -1``, or any input where the expression degenerates).
    """
    t = float(t)
    dp, eta, p, sphi, cphi, k, A, B, D = _coefficients(mp, ps)
    s = mp.s
    if dp.regime is SpectralRegime.UNBROKEN:
        if D <= 0:
            raise NonPositiveNormalization(f"1+p^2+2p eta sin(phi) = {D:.3e}")
        w = s * k
        c2, s2 = math.cos(2 * w * t), math.sin(2 * w * t)
        sx = 2.0 * k * p * cphi / D
        sy = (A * c2 - B * s2) / D
        sz = (B * c2 + A * s2) / D
        sp = math.cos(w * t) ** 2 + (k * 2.0 * p * cphi / D) ** 2 * math.sin(w * t) ** 2
        return _finish(t, sx, sy, sz, sp)

    if dp.regime is SpectralRegime.BROKEN:
        if A <= 0:
            raise NonPositiveNormalization(f"normalisation denominator at t=0 is {A:.3e}")
        w = s * k
        u = 2.0 * w * t
        if abs(u) > RATIO_SWITCH:
            den, rc, rs = _broken_terms(A, B, u)
            if den <= 0:
                raise NonPositiveNormalization(f"normalisation denominator {den:.3e}")
            decay = 2.0 * math.exp(-abs(u)) / den
            sx = decay * 2.0 * k * p * cphi
            sy = decay * D
            sz = (B * rc + A * rs) / den
            hden, _, _ = _broken_terms(A, B, 0.5 * u)
            sp = (2.0 / den) * hden * hden / (4.0 * A)
        else:
            den = A * math.cosh(u) + B * math.sinh(u)
            if den <= 0:
                raise NonPositiveNormalization(f"normalisation denominator {den:.3e}")
            sx = 2.0 * k * p * cphi / den
            sy = D / den
            sz = (B * math.cosh(u) + A * math.sinh(u)) / den
            sp = (A * math.cosh(0.5 * u) + B * math.sinh(0.5 * u)) ** 2 / (A * den)
        return _finish(t, sx, sy, sz, sp)

    tau = s * t
    q = eta * (1.0 + p * p) + 2.0 * p * sphi
    den0 = 1.0 + p * p
    den = den0 + 2.0 * eta * (1.0 - p * p) * tau + 2.0 * tau * tau * D
    if den <= 0:
        raise NonPositiveNormalization(f"normalisation denominator {den:.3e}")
    sx = 2.0 * p * cphi / den
    sy = (2.0 * p * sphi - 2.0 * (1.0 - p * p) * tau - 2.0 * tau * tau * q) / den
    sz = (1.0 - p * p + 2.0 * tau * q) / den
    c2phi = math.cos(2.0 * ps.phi)
    num = (1.0 + p * p) ** 2 + 2.0 * eta * (1.0 - p ** 4) * tau + tau * tau * (1.0 + p ** 4 + 2.0 * p * p * c2phi)
    sp = num / (den0 * den)
    return _finish(t, sx, sy, sz, sp)


def asymptotic_sp(mp: ModelParams, ps: PreparedState) -> float:
    """
    ``lim_{t -> inf} SP(t)`` in the broken phase or at the EP.

    Broken: ``(1 + sign(s) (1-p^2) sqrt(eta^2-1) / A) / 2`` with
    ``A = (1+p^2) eta + 2p sin(phi)``. EP: ``(1+p^2 - 2 eta p sin(phi)) / (2(1+p^2))``.

    Raises
    ------
    NoLimit
        In the unbroken phase, where SP oscillates.
    NonPositiveNormalization
        Broken phase with ``A <= 0``.
    """
    dp, eta, p, sphi, _, k, A, B, _ = _coefficients(mp, ps)
    if dp.regime is SpectralRegime.UNBROKEN:
        raise NoLimit("survival probability oscillates in the unbroken phase")
    if dp.regime is SpectralRegime.BROKEN:
        if A <= 0:
            raise NonPositiveNormalization(f"A = {A:.3e}")
        return 0.5 * (1.0 + math.copysign(1.0, mp.s) * B / A)
    return (1.0 + p * p - 2.0 * eta * p * sphi) / (2.0 * (1.0 + p * p))
