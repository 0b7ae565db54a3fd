"""Landau-de Gennes bulk energy, its molecular field and the eigenvalue interval."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .tensor_core import (
    DomainError,
    QTensor,
    packed_square_traceless,
    packed_trace_q2,
    packed_trace_q3,
)


@dataclass(frozen=True)
class MaterialParams:
    """Constants of the free energy and of the coupled flow.

    ``L`` elastic constant; ``a, b, c`` bulk coefficients; ``nu`` viscosity;
    ``lambda_c`` flow/order coupling; ``gamma`` relaxation rate.
    """

    L: float = 1.0
    a: float = 0.0
    b: float = 1.0
    c: float = 1.0
    nu: float = 1.0
    lambda_c: float = 1.0
    gamma: float = 1.0

    def replace(self, **changes) -> "MaterialParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return MaterialParams(**values)

    @property
    def discriminant(self) -> float:
        return self.b ** 2 - 24.0 * self.a * self.c


@dataclass(frozen=True)
class EigenInterval:
    lo: float
    hi: float

    def contains(self, lam, tol: float = 0.0):
        return (lam >= self.lo - tol) & (lam <= self.hi + tol)


def validate(params: MaterialParams, require_thm_regime: bool = False) -> list[str]:
    """Every violated constraint, as a readable string; empty means valid.

    ``lambda_c = 0`` is accepted: it decouples the flow from the order tensor.
    """
    out = []
    for name in ("L", "b", "c", "nu", "gamma"):
        v = getattr(params, name)
        if not (math.isfinite(v) and v > 0):
            out.append(f"{name} > 0 violated ({name} = {v!r})")
    if not (math.isfinite(params.lambda_c) and params.lambda_c >= 0):
        out.append(f"lambda_c >= 0 violated (lambda_c = {params.lambda_c!r})")
    if not math.isfinite(params.a):
        out.append(f"a finite violated (a = {params.a!r})")
    if require_thm_regime:
        if params.a < 0:
            out.append(f"a >= 0 violated (a = {params.a!r})")
        if params.c > 0 and params.a > params.b ** 2 / (24.0 * params.c):
            out.append(f"a <= b^2/24c violated (a = {params.a!r}, "
                       f"b^2/24c = {params.b ** 2 / (24.0 * params.c)!r})")
    return out


def sqrt_discriminant(params: MaterialParams) -> float:
    """``sqrt(b^2 - 24ac)``; rounding-level negatives at ``a = b^2/24c`` count as 0."""
    disc = params.discriminant
    if disc < 0:
        if disc >= -1e-14 * params.b ** 2:
            return 0.0
        raise DomainError(f"b^2 - 24ac = {disc!r} < 0")
    return math.sqrt(disc)


def eigen_interval(params: MaterialParams) -> EigenInterval:
    """Interval ``[lo, hi]`` left invariant by the flow in the theorem regime."""
    if params.c <= 0 or params.b <= 0:
        raise DomainError("eigen_interval needs b > 0 and c > 0")
    root = params.b + sqrt_discriminant(params)
    hi = root / (6.0 * params.c)
    return EigenInterval(lo=-0.5 * hi, hi=hi)


def uniaxial_equilibrium(params: MaterialParams) -> float:
    """Positive root ``s+`` of ``-a s + (b/3) s^2 - (2c/3) s^3``."""
    return (params.b + sqrt_discriminant(params)) / (4.0 * params.c)


def packed_bulk_density(q, params: MaterialParams):
    tr2 = packed_trace_q2(q)
    tr3 = packed_trace_q3(q)
    return (0.5 * params.a * tr2 - params.b / 3.0 * tr3
            + 0.25 * params.c * tr2 * tr2)


def packed_molecular_field(q, params: MaterialParams):
    """``-aQ + b(Q^2 - tr(Q^2)/3 I) - c tr(Q^2) Q`` on packed arrays."""
    q = np.asarray(q, dtype=float)
    tr2 = packed_trace_q2(q)
    return (-params.a - params.c * tr2) * q + params.b * packed_square_traceless(q)


def bulk_density(Q: QTensor, params: MaterialParams) -> float:
    return float(packed_bulk_density(Q.packed, params))


def molecular_field(Q: QTensor, params: MaterialParams) -> QTensor:
    return QTensor.from_packed(packed_molecular_field(Q.packed, params))


def coercivity_radius(params: MaterialParams) -> float:
    """Radius beyond which the bulk reaction points inward.

    Uses ``tr(M^3) <= |M|^3 / sqrt(6)`` on traceless symmetric ``M``, so
    ``-a t^2 + b tr(M^3) - c t^4 <= -t^2 (c t^2 - (b/sqrt6) t + a)`` with
    ``t = |M|``; the larger root of the quadratic is returned.
    """
    if not (params.b > 0 and params.c > 0):
        raise DomainError("coercivity_radius needs b > 0 and c > 0")
    bs = params.b / math.sqrt(6.0)
    disc = params.b ** 2 / 6.0 - 4.0 * params.a * params.c
    if disc <= 0:
        return 0.0
    return (bs + math.sqrt(disc)) / (2.0 * params.c)
