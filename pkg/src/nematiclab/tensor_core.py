"""Algebra of symmetric traceless 3x3 tensors.

Tensors are stored as five independent components ``(q11, q12, q13, q22, q23)``;
``q33 = -q11 - q22`` and the lower triangle are implied, so symmetry and
tracelessness hold by construction.

Every ``packed_*`` helper is vectorised over trailing axes: a packed array has
shape ``(5, ...)``, a packed skew tensor ``(3, ...)``, eigenvalues ``(3, ...)``.
The scalar API (:class:`QTensor`, :func:`eigenvalues`, ...) wraps them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

NCOMP = 5
# (row, col) of each stored component
COMPONENTS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2))
# Frobenius weight of each stored component, ignoring the implied q33
OFFDIAG_WEIGHT = np.array([1.0, 2.0, 2.0, 1.0, 2.0])

PHYSICAL_RANGE = (-1.0 / 3.0, 2.0 / 3.0)
_DEGENERATE_TRQ2 = 1e-300


class DomainError(ValueError):
    pass


# --------------------------------------------------------------------------
# vectorised kernels on packed arrays
# --------------------------------------------------------------------------

def packed_to_matrix(q):
    """``(5, ...)`` -> ``(3, 3, ...)`` symmetric traceless matrices."""
    q = np.asarray(q, dtype=float)
    q11, q12, q13, q22, q23 = q
    q33 = -q11 - q22
    return np.array([[q11, q12, q13], [q12, q22, q23], [q13, q23, q33]])


def matrix_to_packed(m):
    """Upper-triangle extraction; the trace part is removed from the diagonal.

    Only the upper triangle is read, so a non-symmetric input is silently
    symmetrised by discarding its lower triangle.
    """
    m = np.asarray(m, dtype=float)
    tr3 = (m[0, 0] + m[1, 1] + m[2, 2]) / 3.0
    return np.array([m[0, 0] - tr3, m[0, 1], m[0, 2], m[1, 1] - tr3, m[1, 2]])


def packed_inner(p, q):
    """Frobenius inner product ``tr(P Q)`` of two packed tensors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return (2.0 * (p[0] * q[0] + p[3] * q[3]) + p[0] * q[3] + p[3] * q[0]
            + 2.0 * (p[1] * q[1] + p[2] * q[2] + p[4] * q[4]))


def packed_trace_q2(q):
    q = np.asarray(q, dtype=float)
    return 2.0 * (q[0] * q[0] + q[3] * q[3] + q[0] * q[3]
                  + q[1] * q[1] + q[2] * q[2] + q[4] * q[4])


def packed_norm(q):
    return np.sqrt(packed_trace_q2(q))


def packed_det(q):
    q = np.asarray(q, dtype=float)
    a, d, e, b, f = q
    c = -a - b
    return a * (b * c - f * f) - d * (d * c - e * f) + e * (d * f - b * e)


def packed_trace_q3(q):
    # Cayley-Hamilton on a traceless matrix: tr(Q^3) = 3 det(Q)
    return 3.0 * packed_det(q)


def packed_square_traceless(q):
    """Packed ``Q^2 - tr(Q^2)/3 I``."""
    q = np.asarray(q, dtype=float)
    a, d, e, b, f = q
    c = -a - b
    tr3 = packed_trace_q2(q) / 3.0
    return np.array([
        a * a + d * d + e * e - tr3,
        a * d + d * b + e * f,
        a * e + d * f + e * c,
        d * d + b * b + f * f - tr3,
        d * e + b * f + f * c,
    ])


def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def packed_eigvals(q):
    """Ordered eigenvalues ``(l1 >= l2 >= l3)``.

    The trigonometric formula gives the eigenvalue that is well separated from
    the other two (``l1`` when ``det >= 0``, else ``l3``).  Its eigenvector is a
    cross product of two rows of ``Q - lambda I``; the remaining pair comes
    from the 2x2 block of ``Q`` on the orthogonal plane, whose closed form has
    no cancellation.  Near a double root this keeps full accuracy (the bare
    trigonometric formula loses half the digits there) and an exact double
    root comes out as two equal values.
    """
    q = np.asarray(q, dtype=float)
    tr2 = packed_trace_q2(q)
    degenerate = tr2 < _DEGENERATE_TRQ2
    p = np.sqrt(np.where(degenerate, 1.0, tr2) / 6.0)
    qn = q / p
    # normalised first: p**3 would under/overflow for extreme magnitudes
    r = np.clip(0.5 * packed_det(qn), -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    top = r >= 0.0
    simple = np.where(top, 2.0 * np.cos(phi), 2.0 * np.cos(phi + 2.0 * np.pi / 3.0))

    m = packed_to_matrix(qn)
    shifted = m - simple * np.eye(3).reshape(3, 3, *([1] * simple.ndim))
    cands = np.stack([_cross(shifted[0], shifted[1]), _cross(shifted[0], shifted[2]),
                      _cross(shifted[1], shifted[2])])
    best = np.argmax(np.sum(cands ** 2, axis=1), axis=0)
    v = np.take_along_axis(cands, best[None, None], axis=0)[0]
    v = v / np.sqrt(np.sum(v ** 2, axis=0))
    # e1: v crossed with the coordinate axis least aligned with it
    axis = np.argmin(np.abs(v), axis=0)
    ek = np.moveaxis(np.eye(3)[axis], -1, 0)
    e1 = _cross(v, ek)
    e1 = e1 / np.sqrt(np.sum(e1 ** 2, axis=0))
    e2 = _cross(v, e1)

    def form(x, y):
        return np.einsum("i...,ij...,j...->...", x, m, y)

    b11, b22, b12 = form(e1, e1), form(e2, e2), form(e1, e2)
    mid = 0.5 * (b11 + b22)
    rad = np.hypot(0.5 * (b11 - b22), b12)
    pair_hi, pair_lo = mid + rad, mid - rad

    l1 = np.where(top, simple, pair_hi)
    l2 = np.where(top, pair_hi, pair_lo)
    l3 = np.where(top, pair_lo, simple)
    lam = np.sort(np.stack([l1, l2, l3]), axis=0)[::-1] * p
    return np.where(degenerate, 0.0, lam)


def packed_commutator_skew(w, q):
    """Packed ``w Q - Q w`` for packed skew ``w = (w12, w13, w23)``."""
    w = np.asarray(w, dtype=float)
    q = np.asarray(q, dtype=float)
    w12, w13, w23 = w
    zero = np.zeros_like(w12)
    wm = np.array([[zero, w12, w13], [-w12, zero, w23], [-w13, -w23, zero]])
    qm = packed_to_matrix(q)
    wq = np.einsum("ik...,kj...->ij...", wm, qm)
    # w Q - Q w = w Q + (w Q)^T since w^T = -w and Q^T = Q
    r = wq + np.swapaxes(wq, 0, 1)
    return np.array([r[0, 0], r[0, 1], r[0, 2], r[1, 1], r[1, 2]])


def packed_commutator(p, q):
    """``P Q - Q P`` of two packed symmetric tensors, packed as ``(c12, c13, c23)``."""
    pm = packed_to_matrix(p)
    qm = packed_to_matrix(q)
    pq = np.einsum("ik...,kj...->ij...", pm, qm)
    # (PQ)^T = QP
    return np.array([pq[0, 1] - pq[1, 0], pq[0, 2] - pq[2, 0], pq[1, 2] - pq[2, 1]])


def skew_to_matrix(w):
    w = np.asarray(w, dtype=float)
    w12, w13, w23 = w
    zero = np.zeros_like(w12)
    return np.array([[zero, w12, w13], [-w12, zero, w23], [-w13, -w23, zero]])


# --------------------------------------------------------------------------
# scalar API
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QTensor:
    """A single symmetric traceless 3x3 tensor."""

    q11: float = 0.0
    q12: float = 0.0
    q13: float = 0.0
    q22: float = 0.0
    q23: float = 0.0

    @classmethod
    def from_packed(cls, q) -> "QTensor":
        return cls(*(float(x) for x in np.asarray(q, dtype=float).reshape(NCOMP)))

    @classmethod
    def from_matrix(cls, m) -> "QTensor":
        return cls.from_packed(matrix_to_packed(m))

    @classmethod
    def diag(cls, d1: float, d2: float, d3: float | None = None) -> "QTensor":
        if d3 is not None and abs(d1 + d2 + d3) > 1e-12 * max(1.0, abs(d1), abs(d2)):
            raise DomainError("diagonal entries must sum to zero")
        return cls(q11=d1, q22=d2)

    @property
    def q33(self) -> float:
        return -self.q11 - self.q22

    @property
    def packed(self) -> np.ndarray:
        return np.array([self.q11, self.q12, self.q13, self.q22, self.q23])

    def matrix(self) -> np.ndarray:
        return packed_to_matrix(self.packed)

    def norm(self) -> float:
        return float(packed_norm(self.packed))

    def __add__(self, other: "QTensor") -> "QTensor":
        return QTensor.from_packed(self.packed + other.packed)

    def __sub__(self, other: "QTensor") -> "QTensor":
        return QTensor.from_packed(self.packed - other.packed)

    def __mul__(self, s: float) -> "QTensor":
        return QTensor.from_packed(self.packed * s)

    __rmul__ = __mul__


class EigenTriple(NamedTuple):
    l1: float
    l2: float
    l3: float


@dataclass(frozen=True)
class SkewTensor:
    w12: float = 0.0
    w13: float = 0.0
    w23: float = 0.0

    @property
    def packed(self) -> np.ndarray:
        return np.array([self.w12, self.w13, self.w23])

    def matrix(self) -> np.ndarray:
        return skew_to_matrix(self.packed)


def uniaxial(s: float, n) -> QTensor:
    """``s (n n^T - I/3)`` for a unit vector ``n``."""
    n = np.asarray(n, dtype=float).reshape(3)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise DomainError(f"director must be a unit vector, |n| = {np.linalg.norm(n)!r}")
    return QTensor.from_matrix(s * (np.outer(n, n) - np.eye(3) / 3.0))


def invariants(Q: QTensor) -> tuple[float, float, float]:
    """``(tr Q^2, tr Q^3, det Q)``."""
    q = Q.packed
    det = float(packed_det(q))
    return float(packed_trace_q2(q)), 3.0 * det, det


def eigenvalues(Q: QTensor) -> EigenTriple:
    return EigenTriple(*(float(x) for x in packed_eigvals(Q.packed)))


def corotation(w: SkewTensor, Q: QTensor) -> QTensor:
    return QTensor.from_packed(packed_commutator_skew(w.packed, Q.packed))


def is_physical(Q: QTensor, tol: float = 1e-12) -> bool:
    lam = packed_eigvals(Q.packed)
    lo, hi = PHYSICAL_RANGE
    return bool(np.all(lam >= lo - tol) and np.all(lam <= hi + tol))


# --------------------------------------------------------------------------
# random sampling and the eigen-solver property suite
# --------------------------------------------------------------------------

def random_packed(n: int, rng: np.random.Generator, log10_range=(-3.0, 1.0)) -> np.ndarray:
    """``n`` random packed tensors with norms spread log-uniformly over ``log10_range``."""
    q = rng.standard_normal((NCOMP, n))
    scale = 10.0 ** rng.uniform(*log10_range, size=n)
    return q * scale / packed_norm(q)


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, 3, 3)`` Haar-distributed proper rotations (QR of Gaussian matrices)."""
    qm, r = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    qm = qm * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    flip = np.linalg.det(qm) < 0
    qm[flip, :, 0] *= -1.0
    return qm


def rotate_packed(q, R) -> np.ndarray:
    """``R^T Q R`` for packed ``q`` of shape ``(5, n)`` and ``R`` of shape ``(n, 3, 3)``."""
    m = np.moveaxis(packed_to_matrix(q), -1, 0)
    rot = np.einsum("nki,nkl,nlj->nij", R, m, R)
    return matrix_to_packed(np.moveaxis(rot, 0, -1))


def eigen_property_suite(n: int = 10 ** 5, seed: int = 0) -> dict:
    """Run the eigen-solver checks on ``n`` random tensors / pairs.

    Returns ``{check: {"worst": float, "tol": float, "pass": bool}}``.  Every
    ``worst`` is a normalised error that must not exceed ``tol``.
    """
    rng = np.random.default_rng(seed)
    q = random_packed(n, rng)
    lam = packed_eigvals(q)
    norm = packed_norm(q)
    tr2 = packed_trace_q2(q)
    det = packed_det(q)
    out = {}

    def record(name, worst, tol):
        out[name] = {"worst": float(worst), "tol": tol, "pass": bool(worst <= tol)}

    resid = np.abs(lam ** 3 - 0.5 * tr2 * lam - det) / np.maximum(1.0, norm ** 3)
    record("charpoly_residual", resid.max(), 1e-10)
    record("zero_sum", (np.abs(lam.sum(axis=0)) / np.maximum(1.0, norm)).max(), 1e-12)
    record("ordering", max(0.0, float(np.max(lam[1] - lam[0])), float(np.max(lam[2] - lam[1]))), 0.0)

    # Weyl: half the pairs are independent, half are small perturbations
    b = q.copy()
    half = n // 2
    b[:, :half] = random_packed(half, rng)
    b[:, half:] = q[:, half:] + random_packed(n - half, rng, (-10.0, -1.0)) * norm[half:]
    gap = np.abs(packed_eigvals(b) - lam).max(axis=0)
    slack = 1e-12 * np.maximum(1.0, np.maximum(norm, packed_norm(b)))
    record("weyl", (gap - packed_norm(b - q) - slack).max(), 0.0)

    rot = rotate_packed(q, random_rotations(n, rng))
    drift = np.abs(packed_eigvals(rot) - lam).max(axis=0) / np.maximum(1.0, norm)
    record("rotation_invariance", drift.max(), 1e-10)
    return out
