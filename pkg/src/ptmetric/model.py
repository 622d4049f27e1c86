"""
The PT-symmetric two-level Hamiltonian

    H = [[r e^{i theta}, s], [s, r e^{-i theta}]]

with its derived parameters, exact spectral/Jordan data, closed-form metrics
for the three regimes, the prepared initial state and the eigenstate overlap.
These closed forms serve as the analytic oracle for the numeric layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import JordanDecomposition
from .metric import MetricOperator, SpectralRegime

SNAP = 1e-14
EP_BAND = 1e-10

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class ModelParams:
    r: float
    s: float
    theta: float

    def __post_init__(self):
        for name in ("r", "s", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.r < 0:
            raise ValueError("r must be non-negative")
        if self.s == 0:
            raise ValueError("s must be non-zero")

    @classmethod
    def from_eta(cls, eta: float, s: float = 1.0, rho: float = 0.0) -> "ModelParams":
        """Parameters with ``(r/s) sin(theta) = eta`` and ``r cos(theta) = rho``."""
        y = eta * s
        r = math.hypot(rho, y)
        theta = math.atan2(y, rho) if r > 0 else 0.0
        return cls(r, s, theta)

    def trig(self):
        """(cos theta, sin theta) with values below 1e-14 snapped to zero."""
        c, sn = math.cos(self.theta), math.sin(self.theta)
        if abs(c) < SNAP:
            c = 0.0
        if abs(sn) < SNAP:
            sn = 0.0
        return c, sn


@dataclass(frozen=True)
class DerivedParams:
    rho: float
    lam: float
    eta: float
    d: float
    eta_plus: float
    eta_minus: float
    regime: SpectralRegime

    @property
    def eta_pm_defined(self) -> bool:
        return self.regime is not SpectralRegime.EP


@dataclass(frozen=True)
class PreparedState:
    p: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.phi)):
            raise ValueError("p and phi must be finite")


def regime_from_d(d: float) -> SpectralRegime:
    if abs(d) <= EP_BAND:
        return SpectralRegime.EP
    return SpectralRegime.UNBROKEN if d > 0 else SpectralRegime.BROKEN


def phase_indicator(s_over_r: float, theta: float) -> float:
    """``d = (s/r)^2 - sin^2 theta`` with the same snapping as :func:`derive`."""
    sn = math.sin(theta)
    if abs(sn) < SNAP:
        sn = 0.0
    d = s_over_r ** 2 - sn ** 2
    return 0.0 if abs(d) < SNAP else d


def hamiltonian(mp: ModelParams) -> np.ndarray:
    c, sn = mp.trig()
    return np.array(
        [[mp.r * complex(c, sn), mp.s], [mp.s, mp.r * complex(c, -sn)]], dtype=complex
    )


def derive(mp: ModelParams) -> DerivedParams:
    c, sn = mp.trig()
    rho = mp.r * c
    eta = mp.r * sn / mp.s
    if mp.r == 0:
        d = math.inf
    else:
        d = phase_indicator(mp.s / mp.r, mp.theta)
    regime = regime_from_d(d)
    if regime is SpectralRegime.EP:
        lam, ep, em = 0.0, 0.0, 0.0
    else:
        lam = abs(mp.s) * math.sqrt(abs(1.0 - eta * eta))
        a, b = math.sqrt(abs(1.0 - eta)), math.sqrt(abs(1.0 + eta))
        ep, em = 0.5 * (a + b), 0.5 * (a - b)
    return DerivedParams(rho, lam, eta, d, ep, em, regime)


def spectral_decomposition(mp: ModelParams) -> JordanDecomposition:
    """
    ``H = P J P^{-1}`` in closed form.

    Away from the EP: ``J = diag(rho - l, rho + l)`` with
    ``l = sqrt(s^2 - r^2 sin^2 theta)`` (imaginary in the broken phase).
    At the EP: one 2x2 block at ``rho`` with ``P = [[i eta, 1/s], [1, 0]]``.
    """
    dp = derive(mp)
    s, eta, rho = mp.s, dp.eta, dp.rho
    if dp.regime is SpectralRegime.EP:
        eta = math.copysign(1.0, eta)
        P = np.array([[1j * eta, 1.0 / s], [1.0, 0.0]], dtype=complex)
        J = np.array([[rho, 1.0], [0.0, rho]], dtype=complex)
        return JordanDecomposition(P, J, (2,))
    _, sn = mp.trig()
    lam_c = np.sqrt(complex(s * s - (mp.r * sn) ** 2))
    P = np.array([[-lam_c / s + 1j * eta, lam_c / s + 1j * eta], [1.0, 1.0]], dtype=complex)
    J = np.diag([rho - lam_c, rho + lam_c])
    return JordanDecomposition(P, J, (1, 1))


def _upsilon(ep, em):
    return np.array([[ep, 1j * em], [-1j * em, ep]], dtype=complex)


def closed_metric(mp: ModelParams, b: float | None = None) -> MetricOperator:
    """
    Explicit metric for the regime of ``mp``.

    Unbroken and broken: ``Y = [[eta+, i eta-], [-i eta-, eta+]]`` (absolute
    values under the roots in the broken phase), ``S = Y^† Y``. The stored
    ``similarity`` is ``I + eta sigma_y``, the pre-split operator that
    intertwines ``H`` and ``H^†``.

    At the EP the similarity operator is ``(b/s) sigma_x``; its Krein
    positivization is ``(b/s) I`` with factor ``sqrt(b/s) I``. ``b`` defaults to
    ``sign(s)`` and ``b/s`` must be positive.
    """
    dp = derive(mp)
    if dp.regime is SpectralRegime.EP:
        if b is None:
            b = math.copysign(1.0, mp.s)
        ratio = b / mp.s
        if ratio <= 0:
            raise ValueError("b/s must be positive")
        Y = math.sqrt(ratio) * ID2
        return MetricOperator(ratio * ID2, Y, dp.regime, similarity=ratio * SX)
    Y = _upsilon(dp.eta_plus, dp.eta_minus)
    S = Y.conj().T @ Y
    return MetricOperator(S, Y, dp.regime, similarity=ID2 + dp.eta * SY)


def initial_state(ps: PreparedState) -> np.ndarray:
    return np.array([1.0, ps.p * np.exp(1j * ps.phi)], dtype=complex) / math.sqrt(1.0 + ps.p ** 2)


def eigen_overlap(eta: float) -> float:
    """Metric overlap between the two eigenstates as a function of eta."""
    a = abs(eta)
    if abs(a - 1.0) <= 1e-12:
        return 1.0
    if a < 1.0:
        return 0.0
    return a / math.sqrt(1.0 - a * a + a ** 4)
