"""Brute-force sweeps over eigenvalue triples certifying the scalar inequalities
behind eigenvalue preservation.

Every sweep samples ordered, zero-sum triples ``l1 >= l2 >= l3`` inside a
region, evaluates one or more margins that must be nonnegative, and reports
the smallest one.  Margins are normalised by :func:`margin_scale` (or are
already dimensionless) so a single tolerance works across parameter sweeps.

Sampling is a deterministic grid (linear plus log-refined towards the region
boundary, where margins vanish) followed by a seeded uniform fill, processed
in chunks whose reports are merged by min-margin reduction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from .bulk_potential import MaterialParams, eigen_interval, sqrt_discriminant, validate
from .tensor_core import DomainError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
PASS_TOL = 1e-12
DEFAULT_BOX = 20.0
CHUNK = 1 << 18


class CaseId(enum.Enum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3


@dataclass(frozen=True)
class EigenSample:
    l1: float
    l2: float
    l3: float

    @property
    def S(self) -> float:
        return self.l1 ** 2 + self.l2 ** 2 + self.l3 ** 2


@dataclass
class VerifierReport:
    region: str
    samples_checked: int
    worst_margin: float
    worst_point: EigenSample
    passed: bool
    scale: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_point"] = asdict(self.worst_point)
        return d


def merge_reports(reports: Iterable[VerifierReport]) -> VerifierReport:
    reports = list(reports)
    worst = min(reports, key=lambda r: r.worst_margin)
    return VerifierReport(
        region=worst.region,
        samples_checked=sum(r.samples_checked for r in reports),
        worst_margin=worst.worst_margin,
        worst_point=worst.worst_point,
        passed=all(r.passed for r in reports),
        scale=worst.scale,
    )


def margin_scale(params: MaterialParams) -> float:
    lo = abs(eigen_interval(params).lo)
    return max(1.0, params.b * lo ** 2, params.c * lo ** 3)


def local_scale(S, params: MaterialParams, floor: float):
    """Magnitude of the reaction terms at ``S = |Q|^2``, never below ``floor``.

    Far from the interval the compared terms grow like ``c S^{3/2}``; dividing
    by their size keeps rounding in exact-equality corners below tolerance.
    """
    mag = abs(params.a) * np.sqrt(S) + params.b * S + params.c * S ** 1.5
    return np.maximum(floor, mag)


# --------------------------------------------------------------------------
# case classification
# --------------------------------------------------------------------------

def classify_cases(l2, l3):
    """Vectorised case labels (1, 2, 3) for ``l3 < 0``."""
    l2 = np.asarray(l2, dtype=float)
    l3 = np.asarray(l3, dtype=float)
    return np.where(l2 >= 0, 1, np.where(l2 >= GOLDEN * l3, 2, 3))


def classify_case(l2: float, l3: float) -> CaseId:
    if not l3 < 0:
        raise DomainError(f"case split needs l3 < 0, got l3 = {l3!r}")
    return CaseId(int(classify_cases(l2, l3)))


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def unit_samples(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points ``(t, s)`` in the unit square.

    About half form a tensor grid whose ``t`` axis is refined geometrically
    towards ``t = 0``; the rest are uniform draws from ``default_rng(seed)``.
    """
    m = max(2, int(math.sqrt(n / 2)))
    n_log = m // 4
    t_axis = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, m - n_log),
        np.logspace(-12, -1, n_log) if n_log else np.empty(0),
    ]))
    s_axis = np.linspace(0.0, 1.0, m)
    tg, sg = np.meshgrid(t_axis, s_axis, indexing="ij")
    tg, sg = tg.ravel()[:n], sg.ravel()[:n]
    rest = n - tg.size
    rng = np.random.default_rng(seed)
    tr = rng.random(rest)
    sr = rng.random(rest)
    return np.concatenate([tg, tr]), np.concatenate([sg, sr])


def _chunks(n: int):
    for start in range(0, n, CHUNK):
        yield slice(start, min(n, start + CHUNK))


def _sweep(region: str, n: int, seed: int, scale: float,
           kernel: Callable[[np.ndarray, np.ndarray], tuple]) -> VerifierReport:
    """Evaluate ``kernel(t, s) -> (l1, l2, l3, margin)`` chunk by chunk."""
    t, s = unit_samples(n, seed)
    parts = []
    for sl in _chunks(n):
        l1, l2, l3, margin = kernel(t[sl], s[sl])
        k = int(np.argmin(margin))
        worst = float(margin[k])
        parts.append(VerifierReport(
            region=region,
            samples_checked=int(margin.size),
            worst_margin=worst,
            worst_point=EigenSample(float(l1[k]), float(l2[k]), float(l3[k])),
            passed=bool(worst >= -PASS_TOL),
            scale=scale,
        ))
    return merge_reports(parts)


def _require_theorem_regime(params: MaterialParams):
    problems = validate(params, require_thm_regime=True)
    if problems:
        raise DomainError("; ".join(problems))


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

def step1_terms(l1, l2, l3, params: MaterialParams):
    """Return ``(S, quad, F, bound)`` for the maximal-eigenvalue argument.

    ``F`` is the reaction part of the evolution of ``<Q v, v>`` along the top
    eigenvector; ``bound = -(3c/2) l1 quad`` is its upper bound.
    """
    a, b, c = params.a, params.b, params.c
    S = l1 * l1 + l2 * l2 + l3 * l3
    quad = l1 * l1 - b / (3 * c) * l1 + 2 * a / (3 * c)
    F = -l1 * (a + c * S) + b * (l1 * l1 - S / 3)
    bound = -1.5 * c * l1 * quad
    return S, quad, F, bound


def verify_step1(params: MaterialParams, n_samples: int = 10 ** 6,
                 seed: int = 0, box: float = DEFAULT_BOX) -> VerifierReport:
    """Above the interval (``l1 > hi``): ``S >= 3/2 l1^2``, the quadratic is
    positive, and the reaction is bounded by the negative drive."""
    _require_theorem_regime(params)
    hi = eigen_interval(params).hi
    scale = margin_scale(params)
    c = params.c

    def kernel(t, s):
        l1 = hi * (1.0 + (box - 1.0) * t)
        l2 = l1 * (1.0 - 1.5 * s)
        l3 = -l1 - l2
        S, quad, F, bound = step1_terms(l1, l2, l3, params)
        margin = np.minimum.reduce([
            c * l1 * (S - 1.5 * l1 * l1),
            1.5 * c * l1 * quad,
            bound - F,
        ]) / local_scale(S, params, scale)
        return l1, l2, l3, margin

    return _sweep("step1", n_samples, seed, scale, kernel)


def claim_terms(l2, l3, params: MaterialParams):
    """``(R, T)``: reaction along the bottom eigenvector and its claimed lower bound."""
    a, b, c = params.a, params.b, params.c
    l1 = -l2 - l3
    S = l1 * l1 + l2 * l2 + l3 * l3
    R = -l3 * (a + c * S) + b * (l3 * l3 - S / 3)
    T = -1.5 * c * l3 * (l3 * l3 + b / (6 * c) * l3 + a / (6 * c))
    return R, T


def verify_claim(params: MaterialParams, n_samples: int = 10 ** 6,
                 seed: int = 0, box: float = DEFAULT_BOX) -> VerifierReport:
    """Below the interval (``l3 < lo``): ``R >= T`` and ``T > 0``."""
    _require_theorem_regime(params)
    lo = eigen_interval(params).lo
    scale = margin_scale(params)

    def kernel(t, s):
        l3 = lo * (1.0 + (box - 1.0) * t)
        l2 = l3 * (1.0 - 1.5 * s)
        l1 = -l2 - l3
        R, T = claim_terms(l2, l3, params)
        S = l1 * l1 + l2 * l2 + l3 * l3
        margin = np.minimum(R - T, T) / local_scale(S, params, scale)
        return l1, l2, l3, margin

    return _sweep("claim", n_samples, seed, scale, kernel)


def case_bound_margins(l2, l3):
    """Dimensionless margins of the per-case sandwich on ``S / l3^2``."""
    l1 = -l2 - l3
    ratio = (l1 * l1 + l2 * l2 + l3 * l3) / (l3 * l3)
    case = classify_cases(l2, l3)
    lower = np.select([case == 1, case == 2, case == 3], [1.5, 2.0, 4.0])
    upper = np.select([case == 1, case == 2, case == 3], [2.0, 4.0, np.inf])
    # |l2| <= |l3| holds in every case
    return np.minimum.reduce([ratio - lower, upper - ratio,
                              (np.abs(l3) - np.abs(l2)) / np.abs(l3)])


def verify_case_bounds(n_samples: int = 10 ** 6, seed: int = 0,
                       box: float = DEFAULT_BOX) -> VerifierReport:
    def kernel(t, s):
        l3 = -(1.0 / box) * box ** (2.0 * t)
        l2 = l3 * (1.0 - 1.5 * s)
        return -l2 - l3, l2, l3, case_bound_margins(l2, l3)

    return _sweep("case_bounds", n_samples, seed, 1.0, kernel)


def case3_terms(l2, l3, params: MaterialParams):
    """``(mu, B, E)`` with ``E = B mu + l3^2 + a/(3c)``."""
    a, b, c = params.a, params.b, params.c
    mu = l2 * l2 + l2 * l3 - l3 * l3
    B = 1.0 + (b / (3 * c)) / l3
    return mu, B, B * mu + l3 * l3 + a / (3 * c)


def verify_case3_reduction(params: MaterialParams, n_samples: int = 10 ** 6,
                           seed: int = 0, box: float = DEFAULT_BOX) -> VerifierReport:
    """Case 3 below the interval: bounds on ``mu`` and the bracket, the reduced
    inequality, and monotone decrease of ``mu`` in ``l2``."""
    _require_theorem_regime(params)
    lo = eigen_interval(params).lo
    scale = margin_scale(params)
    b, c = params.b, params.c
    bracket_lo = 1.0 - 4.0 * b / (b + sqrt_discriminant(params))
    rng = np.random.default_rng(seed + 1)

    def kernel(t, s):
        l3 = lo * (1.0 + (box - 1.0) * t)
        l2 = l3 * (1.0 - (1.0 - GOLDEN) * s)
        mu, B, E = case3_terms(l2, l3, params)
        # a second point further right in l2 at the same l3
        s2 = s + rng.random(s.size) * (1.0 - s)
        mu2, _, _ = case3_terms(l3 * (1.0 - (1.0 - GOLDEN) * s2), l3, params)
        sq = l3 * l3
        S = 2.0 * (l2 * l2 + l2 * l3 + sq)
        margin = np.minimum.reduce([
            mu / sq,
            (sq - mu) / sq,
            B - bracket_lo,
            1.0 - B,
            np.full_like(B, bracket_lo + 3.0),
            c * np.abs(l3) * E / local_scale(S, params, scale),
            (mu - mu2) / sq,
        ])
        return -l2 - l3, l2, l3, margin

    return _sweep("case3_reduction", n_samples, seed, scale, kernel)


def verify_all(params: MaterialParams, n_samples: int = 10 ** 6, seed: int = 0,
               box: float = DEFAULT_BOX) -> list[VerifierReport]:
    return [
        verify_step1(params, n_samples, seed, box),
        verify_claim(params, n_samples, seed, box),
        verify_case_bounds(n_samples, seed, box),
        verify_case3_reduction(params, n_samples, seed, box),
    ]


def parameter_grid() -> list[MaterialParams]:
    """The 27-point ``(a, b, c)`` sweep used for certification."""
    out = []
    for b in (0.5, 1.0, 2.0):
        for c in (0.5, 1.0, 2.0):
            for a in (0.0, b * b / (48 * c), b * b / (24 * c)):
                out.append(MaterialParams(a=a, b=b, c=c))
    return out
