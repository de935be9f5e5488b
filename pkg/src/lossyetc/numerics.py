"""Dense linear-algebra helpers shared by the simulator and the bounds code.

Everything here operates on small (n <= a few dozen) float64 matrices. The
matrix exponential and the eigensolver are delegated to scipy/numpy; this
module adds the fixed tolerances, deterministic ordering, and validity checks
that the rest of the package relies on. Tolerances are module constants on
purpose: bound verification must not depend on per-run knobs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm as _scipy_expm

Matrix = np.ndarray

# Relative accuracy of mat_exp (scaling-and-squaring Pade, scipy).
EXPM_REL_TOL = 1e-10
# Per-eigenpair residual gate: ||M v - lambda v|| <= tol * ||v||.
EIG_RESIDUAL_TOL = 1e-8
# Real parts closer to zero than this are treated as marginal, not growing.
# Defective eigenvalues (the vehicle plant has a double zero) come back from
# the QR iteration with ~sqrt(eps) noise on their real parts, so a strict
# sign test would misclassify them.
MARGINAL_RE_TOL = 1e-6
# Safety margins of decay_envelope: rate backs off 1% from the spectral
# abscissa, the gain adds 5% headroom over the sampled sup.
ENVELOPE_RATE_MARGIN = 0.99
ENVELOPE_GAIN_MARGIN = 1.05
ENVELOPE_FIT_POINTS = 400
ENVELOPE_CHECK_POINTS = 300


class NumericsError(Exception):
    """Raised when a numerics operation cannot certify its result."""


class EigendecompositionError(NumericsError):
    """Eigensolver output failed the residual gate."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted by descending real part, unit right eigenvectors.

    eigenvectors[:, i] belongs to eigenvalues[i]. Conjugate pairs are adjacent
    (positive imaginary part first) so the ordering is deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def num_growing(self) -> int:
        """Count of eigenvalues with real part above the marginal band."""
        return int(np.sum(self.eigenvalues.real > MARGINAL_RE_TOL))

    @property
    def num_nondecaying(self) -> int:
        """Count of eigenvalues not strictly inside the open left half plane."""
        return int(np.sum(self.eigenvalues.real > -MARGINAL_RE_TOL))


@dataclass(frozen=True)
class DecayEnvelope:
    """Certified bound ||exp(M t)|| <= c * exp(-rate * t) for t >= 0."""

    c: float
    rate: float


def _as_square(matrix: Matrix, name: str = "matrix") -> Matrix:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} has non-finite entries")
    return m


def mat_exp(matrix: Matrix, t: float = 1.0) -> Matrix:
    """exp(matrix * t) via scaling-and-squaring Pade."""
    m = _as_square(matrix)
    if not np.isfinite(t):
        raise NumericsError("time argument must be finite")
    return _scipy_expm(m * t)


def eigendecompose(matrix: Matrix) -> EigenDecomposition:
    """Right eigendecomposition with deterministic ordering.

    Raises EigendecompositionError if any eigenpair misses the residual gate
    (rather than silently returning garbage); defective inputs are accepted
    as long as the returned pairs individually satisfy it.
    """
    m = _as_square(matrix)
    try:
        values, vectors = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(f"eigensolver did not converge: {exc}") from exc
    order = np.lexsort((-values.imag, -values.real))
    values = values[order]
    vectors = vectors[:, order]
    norms = np.linalg.norm(vectors, axis=0)
    if np.any(norms == 0.0):
        raise EigendecompositionError("eigensolver returned a zero vector")
    vectors = vectors / norms
    residuals = np.linalg.norm(m @ vectors - vectors * values, axis=0)
    worst = float(np.max(residuals)) if residuals.size else 0.0
    scale = max(1.0, float(np.linalg.norm(m, 2)))
    if worst > EIG_RESIDUAL_TOL * scale:
        raise EigendecompositionError(
            f"eigenpair residual {worst:.3e} exceeds {EIG_RESIDUAL_TOL:.0e} * {scale:.3e}"
        )
    return EigenDecomposition(eigenvalues=values, eigenvectors=vectors)


def spectral_abscissa(matrix: Matrix) -> float:
    """Largest real part over the spectrum."""
    return float(np.max(eigendecompose(matrix).eigenvalues.real))


def exp_norms_on_grid(matrix: Matrix, ts: np.ndarray) -> np.ndarray:
    """2-norms of exp(matrix * t) for each t in ts.

    Fast path reconstructs the exponentials from one eigendecomposition and
    takes batched SVDs; it is cross-checked against expm at one grid point and
    abandoned for a direct expm loop when the input is too far from
    diagonalizable.
    """
    m = _as_square(matrix)
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return np.zeros(0)
    try:
        dec = eigendecompose(m)
        v = dec.eigenvectors
        vinv = np.linalg.inv(v)
        if np.linalg.cond(v) < 1e7:
            batch = np.einsum(
                "ij,tj,jk->tik", v, np.exp(np.outer(ts, dec.eigenvalues)), vinv
            )
            probe = ts[len(ts) // 2]
            direct = mat_exp(m, float(probe))
            err = np.linalg.norm(batch[len(ts) // 2].real - direct)
            if err <= 1e-9 * max(1.0, np.linalg.norm(direct)):
                return np.linalg.svd(batch.real, compute_uv=False)[:, 0]
    except (EigendecompositionError, np.linalg.LinAlgError):
        pass
    return np.array([np.linalg.norm(mat_exp(m, float(t)), 2) for t in ts])


def decay_envelope(matrix: Matrix) -> DecayEnvelope:
    """Fit and validate c, rate with ||exp(M t)|| <= c exp(-rate t).

    The rate is 99% of the negated spectral abscissa; c is 105% of the sup of
    ||exp(M t)|| exp(rate t) over a 400-point geometric grid on [0, 20/rate].
    The pair is then re-checked on a fixed-seed random grid over [0, 40/rate];
    failure raises instead of returning an uncertified envelope.
    """
    m = _as_square(matrix)
    sa = spectral_abscissa(m)
    if sa >= 0.0:
        raise NumericsError(f"matrix is not Hurwitz (spectral abscissa {sa:.3e})")
    rate = ENVELOPE_RATE_MARGIN * (-sa)
    horizon = 20.0 / rate
    grid = np.concatenate([[0.0], np.geomspace(horizon * 1e-4, horizon, ENVELOPE_FIT_POINTS - 1)])
    sup = float(np.max(exp_norms_on_grid(m, grid) * np.exp(rate * grid)))
    c = ENVELOPE_GAIN_MARGIN * sup
    check = np.random.default_rng(0).uniform(0.0, 2.0 * horizon, ENVELOPE_CHECK_POINTS)
    excess = exp_norms_on_grid(m, check) - c * np.exp(-rate * check)
    if np.max(excess) > 1e-9:
        raise NumericsError(
            f"decay envelope failed validation by {np.max(excess):.3e}"
        )
    return DecayEnvelope(c=c, rate=rate)


def _bisect_bracket(
    f: Callable[[float], float], lo: float, hi: float, tol: float
) -> tuple[float, float]:
    """Shrink a sign-change bracket to width <= tol; returns (lo, hi)."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo, lo
    if fhi == 0.0:
        return hi, hi
    if (flo > 0.0) == (fhi > 0.0):
        raise NumericsError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = f(mid)
        if fmid == 0.0:
            return mid, mid
        if (fmid > 0.0) == (fhi > 0.0):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return lo, hi


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Root of f on [lo, hi] by bisection; f(lo) and f(hi) must differ in sign.

    Returns the midpoint of the final bracket, whose width is at most tol.
    """
    if not (tol > 0.0):
        raise NumericsError("tol must be positive")
    if not (hi > lo):
        raise NumericsError("need hi > lo")
    a, b = _bisect_bracket(f, float(lo), float(hi), float(tol))
    return 0.5 * (a + b)
