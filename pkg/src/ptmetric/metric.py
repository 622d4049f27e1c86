"""
Regime classification and metric construction for pseudo-Hermitian matrices.

A metric here is a positive-definite Hermitian ``S = Y^† Y`` that defines the
inner product ``<x|y>_S = <x|S y>``. How it is obtained depends on the
spectrum of ``H``:

* unbroken (real, diagonalizable): ``S = sum_a |psi_a><psi_a|`` over the
  eigenvectors of ``H^†``;
* broken (complex-conjugate pairs): the conjugate-paired similarity operator
  is indefinite and is positivized in Krein space, ``S_K = S_+ - S_-``;
* exceptional point (defective): a similarity operator from the Jordan
  chains of ``H^†``, Krein-positivized when indefinite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    NotDefective,
    NotHermitian,
    NotPositiveDefinite,
    SingularMetric,
    UnpairedEigenvalue,
    WrongRegime,
)
from .linalg import dagger, norm

REAL_TOL = 1e-9
HERMITIAN_TOL = 1e-10
FACTOR_TOL = 1e-10


class SpectralRegime(str, enum.Enum):
    UNBROKEN = "UnbrokenSymmetric"
    BROKEN = "BrokenSymmetric"
    EP = "ExceptionalPoint"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MetricBuildOptions:
    """
    Free parameters of the similarity-operator constructions.

    ``zeta`` weights the conjugate-pair terms (its imaginary part must not
    vanish), ``b`` weights the Jordan-chain terms at exceptional points and
    ``tol`` is the eigenvalue pairing window (``None``: ``1e-8 max(1, ||H||)``).
    """

    zeta: complex = 1j
    b: float = 1.0
    tol: float | None = None

    def __post_init__(self):
        if complex(self.zeta).imag == 0:
            raise ValueError("zeta must have a non-zero imaginary part")
        if self.b == 0 or not np.isfinite(self.b):
            raise ValueError("b must be finite and non-zero")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")

    def pair_tol(self, H) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-8 * max(1.0, norm(H))


@dataclass(frozen=True, eq=False)
class MetricOperator:
    """
    Validated metric ``S`` with Hermitian factor ``Upsilon`` (``S = Y^† Y``).

    ``similarity`` keeps the operator the metric was derived from before any
    Krein positivization; it is the one that intertwines ``H`` and ``H^†``.
    """

    S: np.ndarray
    Upsilon: np.ndarray
    regime: SpectralRegime
    similarity: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        S = linalg.as_matrix(self.S, "S")
        Y = linalg.as_matrix(self.Upsilon, "Upsilon")
        nS = max(norm(S), 1e-300)
        if norm(S - dagger(S)) > HERMITIAN_TOL * nS:
            raise NotHermitian("metric is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (S + dagger(S))).min() <= 0:
            raise NotPositiveDefinite("metric is not positive definite")
        if norm(dagger(Y) @ Y - S) > FACTOR_TOL * nS:
            raise ValueError("Upsilon^dag Upsilon does not reproduce S")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Upsilon", Y)

    @classmethod
    def from_metric(cls, S, regime, similarity=None, tol=1e-10):
        return cls(S, linalg.hermitian_sqrt_factor(S, tol), regime, similarity)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def inner(self, x, y) -> complex:
        return linalg.inner(x, y, self.S)

    def scaled(self, c: float) -> "MetricOperator":
        """The same metric times a positive constant."""
        if c <= 0:
            raise ValueError("scale must be positive")
        sim = None if self.similarity is None else c * self.similarity
        return MetricOperator(c * self.S, np.sqrt(c) * self.Upsilon, self.regime, sim)


def classify_regime(H, tol=None) -> SpectralRegime:
    """
    Unbroken, broken or exceptional point, read off the spectrum of ``H``.

    ``tol`` is the eigenvalue-coincidence window passed to
    :func:`ptmetric.linalg.eigendecompose`.
    """
    H = linalg.as_matrix(H, "H")
    ed = linalg.eigendecompose(H, tol)
    if ed.is_defective:
        return SpectralRegime.EP
    if np.max(np.abs(ed.eigenvalues.imag)) <= REAL_TOL * max(norm(H), 1e-300):
        return SpectralRegime.UNBROKEN
    return SpectralRegime.BROKEN


def verify_pseudo_hermiticity(H, S) -> float:
    """Relative intertwining residual ``||H^† S - S H|| / (||H|| ||S||)``."""
    H = linalg.as_matrix(H, "H")
    S = linalg.as_matrix(S, "S")
    if H.shape != S.shape:
        raise ValueError("H and S must have the same shape")
    denom = norm(H) * norm(S)
    if denom == 0:
        return 0.0
    return norm(dagger(H) @ S - S @ H) / denom


def _require(H, regime, tol=None):
    got = classify_regime(H, tol)
    if got is not regime:
        raise WrongRegime(f"expected {regime.value}, H is {got.value}")


def build_metric_unbroken(H, tol=1e-10) -> MetricOperator:
    """``S = sum_a |psi_a><psi_a|`` from gauge-fixed eigenvectors of ``H^†``."""
    H = linalg.as_matrix(H, "H")
    _require(H, SpectralRegime.UNBROKEN)
    psi = linalg.eigendecompose(dagger(H)).right_vectors
    S = psi @ dagger(psi)
    S = 0.5 * (S + dagger(S))
    try:
        return MetricOperator.from_metric(S, SpectralRegime.UNBROKEN, similarity=S, tol=tol)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            "unbroken metric is singular; eigenvector degeneracy missed by classification"
        ) from exc


def _paired_terms(vals_h, vals_hd, psi, zeta, tol):
    """
    Conjugate-pair similarity from eigenvectors ``psi`` of ``H^†``.

    ``vals_h`` are eigenvalues of ``H``, ``vals_hd`` those of ``H^†`` (same
    sorted order as the columns of ``psi``). Self-paired (real) eigenvalues
    contribute ``|psi><psi|``.
    """
    n = len(vals_h)
    S = np.zeros((psi.shape[0],) * 2, dtype=complex)
    matched = np.zeros(n, dtype=bool)
    for a in range(n):
        target = np.conj(vals_h[a])
        hits = np.flatnonzero(np.abs(vals_hd - target) <= tol)
        # a pseudo-Hermitian spectrum is closed under conjugation
        if hits.size == 0 or np.min(np.abs(vals_h - target)) > tol:
            raise UnpairedEigenvalue(
                f"no H^dag eigenvalue within {tol:.1e} of conj(E_{a}) = {target:.6g}"
            )
        matched[a] = True
        for b in hits:
            if b < a:
                continue
            pb, pa = psi[:, b], psi[:, a]
            if b == a:
                S += np.outer(pa, pa.conj())
            else:
                S += zeta * np.outer(pb, pa.conj()) + np.conj(zeta) * np.outer(pa, pb.conj())
    return S


def build_similarity_broken(H, opts: MetricBuildOptions | None = None) -> np.ndarray:
    """
    Hermitian (generally indefinite) similarity operator for the broken phase.

    Eigenvectors of ``H^†`` are paired whenever an eigenvalue of ``H^†``
    equals the conjugate of an eigenvalue of ``H``; each pair contributes
    ``zeta |psi_b><psi_a| + zeta^* |psi_a><psi_b|``.
    """
    opts = opts or MetricBuildOptions()
    H = linalg.as_matrix(H, "H")
    _require(H, SpectralRegime.BROKEN)
    vals_h = linalg.eigendecompose(H).eigenvalues
    edd = linalg.eigendecompose(dagger(H))
    return _paired_terms(vals_h, edd.eigenvalues, edd.right_vectors, opts.zeta, opts.pair_tol(H))


def krein_split(S, tol=1e-10):
    """
    Split Hermitian ``S`` into ``S_+`` and ``S_-`` from its positive and
    negative eigenvalues (``S = S_+ + S_-``; ``S_-`` is negative semidefinite).
    """
    S = linalg.as_matrix(S, "S")
    nS = max(norm(S), 1e-300)
    if norm(S - dagger(S)) > tol * nS:
        raise NotHermitian(f"||S - S^dag|| = {norm(S - dagger(S)):.3e}")
    w, V = np.linalg.eigh(0.5 * (S + dagger(S)))
    if np.min(np.abs(w)) <= tol * nS:
        raise SingularMetric(f"eigenvalue {w[np.argmin(np.abs(w))]:.3e} is within tol of zero")
    Sp = (V * np.where(w > 0, w, 0.0)) @ dagger(V)
    Sm = (V * np.where(w < 0, w, 0.0)) @ dagger(V)
    return Sp, Sm


def krein_positivize(S, tol=1e-10, regime=SpectralRegime.BROKEN) -> MetricOperator:
    """Positive-definite ``S_K = S_+ - S_-`` (the Krein-space metric of ``S``)."""
    Sp, Sm = krein_split(S, tol)
    SK = Sp - Sm
    SK = 0.5 * (SK + dagger(SK))
    return MetricOperator.from_metric(SK, regime, similarity=linalg.as_matrix(S), tol=tol)


def _canonical_chain(w1, w2):
    """Scale the chain so max|w1| = 1 (real) and make ``w2`` orthogonal to ``w1``."""
    k = int(np.argmax(np.abs(w1)))
    pivot = w1[k]
    w1 = w1 / pivot
    w2 = w2 / pivot
    w2 = w2 - (np.vdot(w1, w2) / np.vdot(w1, w1)) * w1
    return w1, w2


def build_similarity_ep(H, opts: MetricBuildOptions | None = None) -> np.ndarray:
    """
    Hermitian similarity operator at an exceptional point.

    Built from the Jordan form of ``H^†``: every 2x2 block with chain
    ``H^† w1 = E w1``, ``H^† w2 = E w2 + w1`` contributes
    ``b (|w1><w2| + |w2><w1|)``; remaining simple eigenvalues are paired as
    in the broken phase.
    """
    opts = opts or MetricBuildOptions()
    H = linalg.as_matrix(H, "H")
    regime = classify_regime(H)
    if regime is not SpectralRegime.EP:
        raise NotDefective(f"H is diagonalizable ({regime.value})")
    Hd = dagger(H)
    jd = linalg.jordan_decompose(Hd, force_block=True)
    n = H.shape[0]
    S = np.zeros((n, n), dtype=complex)
    simple_cols, simple_vals = [], []
    k = 0
    for size in jd.block_sizes:
        if size == 2:
            w1, w2 = _canonical_chain(jd.P[:, k], jd.P[:, k + 1])
            S += opts.b * (np.outer(w1, w2.conj()) + np.outer(w2, w1.conj()))
        else:
            simple_cols.append(linalg.fix_gauge(jd.P[:, k]))
            simple_vals.append(jd.J[k, k])
        k += size
    if simple_cols:
        vals_hd = np.array(simple_vals)
        psi = np.column_stack(simple_cols)
        # the spectrum of H is the conjugate set of the spectrum of H^dag
        S += _paired_terms(np.conj(vals_hd), vals_hd, psi, opts.zeta, opts.pair_tol(H))
    return 0.5 * (S + dagger(S))


def build_metric(H, opts: MetricBuildOptions | None = None, tol=1e-10) -> MetricOperator:
    """Classify ``H`` and build the positive-definite metric for its regime."""
    opts = opts or MetricBuildOptions()
    H = linalg.as_matrix(H, "H")
    regime = classify_regime(H)
    if regime is SpectralRegime.UNBROKEN:
        return build_metric_unbroken(H, tol)
    if regime is SpectralRegime.BROKEN:
        return krein_positivize(build_similarity_broken(H, opts), tol, regime)
    S = build_similarity_ep(H, opts)
    if np.linalg.eigvalsh(S).min() > tol * norm(S):
        return MetricOperator.from_metric(S, regime, similarity=S, tol=tol)
    return krein_positivize(S, tol, regime)


def hermitian_equivalent(H, m: MetricOperator) -> np.ndarray:
    """``h = Y H Y^{-1}``; only defined for an unbroken-phase metric."""
    if m.regime is not SpectralRegime.UNBROKEN:
        raise WrongRegime("hermitian_equivalent needs an unbroken-phase metric")
    H = linalg.as_matrix(H, "H")
    Y = m.Upsilon
    return Y @ H @ np.linalg.inv(Y)


def metric_overlap(u, v, m: MetricOperator) -> float:
    """``|<u|v>_S|`` after normalising both vectors under the metric."""
    nu = m.inner(u, u).real
    nv = m.inner(v, v).real
    return abs(m.inner(u, v)) / np.sqrt(nu * nv)
