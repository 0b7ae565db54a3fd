"""Time integration of the co-rotational Beris-Edwards system.

Unknowns are an in-plane velocity ``u`` and a full packed Q-tensor per cell.
Viscous and elastic diffusion are implicit (an exact integrating factor on
the spectral backend, a linear solve on the FD backend); advection,
co-rotation, the bulk reaction and the elastic stress are explicit.  The
pressure is never formed: the momentum update is Leray-projected.

Schemes: ``"imex-euler"`` (first order) and ``"imex-bdf2"`` (SBDF2, started
with one Euler step).  No eigenvalue clipping is ever applied.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .bulk_potential import MaterialParams, packed_bulk_density, packed_molecular_field
from .fields import (
    DIRICHLET,
    Grid2D,
    StressField,
    TensorField,
    VectorField,
    make_backend,
    packed_vorticity,
    write_snapshot,
)
from .tensor_core import (
    packed_commutator,
    packed_commutator_skew,
    packed_inner,
    packed_trace_q2,
)

log = logging.getLogger(__name__)

IMEX_EULER = "imex-euler"
IMEX_BDF2 = "imex-bdf2"
SCHEMES = (IMEX_EULER, IMEX_BDF2)


class CFLViolation(RuntimeError):
    def __init__(self, dt, limit, detail=""):
        super().__init__(f"dt = {dt:.3e} exceeds stability limit {limit:.3e} {detail}".rstrip())
        self.dt = dt
        self.limit = limit


class SolverBlowup(RuntimeError):
    def __init__(self, msg, last_good: "SimState", snapshot_path: Optional[str] = None):
        if snapshot_path:
            msg = f"{msg}; last good snapshot at {snapshot_path}"
        super().__init__(msg)
        self.last_good = last_good
        self.snapshot_path = snapshot_path


@dataclass
class BoundaryData:
    """Time-independent Dirichlet data; only the ring cells of ``q`` are used.

    The velocity vanishes on the boundary.
    """

    q: np.ndarray

    @classmethod
    def from_initial(cls, Q0: TensorField) -> "BoundaryData":
        return cls(Q0.data.copy())

    def linf(self, grid: Grid2D) -> float:
        ring = grid.ring_mask()
        if not ring.any():
            return 0.0
        return float(np.sqrt(np.max(packed_trace_q2(self.q[:, ring]))))


@dataclass
class StepDiagnostics:
    div_residual: float = 0.0
    cfl: float = 0.0
    energy: float = 0.0


@dataclass
class SimState:
    t: float
    u: VectorField
    Q: TensorField
    params: MaterialParams
    dt: float
    backend: str = "spectral"
    scheme: str = IMEX_EULER
    safety: float = 0.5
    boundary: Optional[BoundaryData] = None
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)
    # previous level (u, Q, velocity forcing, Q forcing) for the two-step scheme
    history: Optional[tuple] = None

    @property
    def grid(self) -> Grid2D:
        return self.Q.grid

    def copy(self) -> "SimState":
        return replace(self, u=VectorField(self.grid, self.u.data.copy()),
                       Q=TensorField(self.grid, self.Q.data.copy()))


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------

def packed_elastic_stress(be, q, params: MaterialParams, dq=None, lap_q=None):
    """``lambda L (Q Lap Q - Lap Q Q) - lambda L (grad Q . grad Q)``, in-plane block.

    Returns ``(s11, s12, s21, s22)``; ``(grad Q . grad Q)_ij = d_i Q : d_j Q``.
    """
    coef = params.lambda_c * params.L
    if dq is None:
        dq = be.grad(q)
    if lap_q is None:
        lap_q = be.lap(q)
    comm12 = packed_commutator(q, lap_q)[0]
    g11 = packed_inner(dq[0], dq[0])
    g12 = packed_inner(dq[0], dq[1])
    g22 = packed_inner(dq[1], dq[1])
    return coef * np.stack([-g11, comm12 - g12, -comm12 - g12, -g22])


def elastic_stress(Q: TensorField, params: MaterialParams, backend: str | None = None) -> StressField:
    be = make_backend(Q.grid, backend)
    return StressField(Q.grid, packed_elastic_stress(be, Q.data, params))


def stress_divergence(be, sigma):
    """``(div sigma)_i = d_j sigma_ji`` for the packed in-plane block.

    Contracting on the first index pairs the commutator stress with
    ``w12 = (dx u2 - dy u1)/2`` so that kinetic plus free energy dissipates.
    """
    s11, s12, s21, s22 = sigma
    return np.stack([be.dx(s11) + be.dy(s21), be.dx(s12) + be.dy(s22)])


def momentum_forcing(be, u, q, params: MaterialParams, dq=None):
    """Explicit momentum terms ``-(u.grad)u + div sigma`` (pressure omitted)."""
    du0 = be.grad(u[0])
    du1 = be.grad(u[1])
    adv = np.stack([u[0] * du0[0] + u[1] * du0[1], u[0] * du1[0] + u[1] * du1[1]])
    f = -adv
    if params.lambda_c != 0.0:
        f = f + stress_divergence(be, packed_elastic_stress(be, q, params, dq=dq))
    return be.dealias(f)


def q_forcing(be, q, u, params: MaterialParams, dq=None):
    """Explicit Q terms ``-u.grad Q + (w Q - Q w) + Gamma H_bulk(Q)``."""
    if dq is None:
        dq = be.grad(q)
    out = params.gamma * packed_molecular_field(q, params)
    if np.any(u):
        w = packed_vorticity(be, u)
        out = out - (u[0] * dq[0] + u[1] * dq[1]) + packed_commutator_skew(w, q)
    return be.dealias(out)


def stability_limit(be, q, u, params: MaterialParams) -> float:
    """Largest dt with CFL number 1 for explicit advection and reaction."""
    g = be.grid
    umax = float(np.sqrt(np.max(u[0] ** 2 + u[1] ** 2)))
    qmax = float(np.sqrt(np.max(packed_trace_q2(q))))
    rates = [umax / min(g.hx, g.hy),
             params.gamma * (abs(params.a) + params.b * qmax + 3 * params.c * qmax ** 2)]
    rate = max(rates)
    return math.inf if rate == 0 else 1.0 / rate


def _check_cfl(be, q, u, params, dt, safety) -> float:
    limit = stability_limit(be, q, u, params)
    cfl = dt / limit
    if cfl > safety:
        raise CFLViolation(dt, safety * limit, f"(CFL {cfl:.3f} > safety {safety})")
    return cfl


# --------------------------------------------------------------------------
# implicit parts
# --------------------------------------------------------------------------

def _implicit_euler(be, x, rate, dt):
    """Advance ``x`` through ``x' = rate Lap x`` over ``dt``."""
    if rate == 0.0:
        return x
    if be.kind == "spectral":
        return be.heat(x, rate * dt)
    return be.helmholtz(x, 1.0, rate * dt)


def _impose_q(grid, q, boundary: Optional[BoundaryData]):
    if boundary is not None and grid.boundary == DIRICHLET:
        ring = grid.ring_mask()
        q[:, ring] = boundary.q[:, ring]
    return q


def impose_velocity_boundary(grid, u):
    if grid.boundary == DIRICHLET:
        u[:, grid.ring_mask()] = 0.0
    return u


def _q_update(be, q, nq, params, dt, scheme, prev=None):
    rate = params.gamma * params.L
    if scheme == IMEX_BDF2 and prev is not None:
        q_old, nq_old = prev
        rhs = 4.0 * q - q_old + 2.0 * dt * (2.0 * nq - nq_old)
        return be.helmholtz(rhs, 3.0, 2.0 * dt * rate)
    return _implicit_euler(be, q + dt * nq, rate, dt)


def _u_update(be, u, fu, params, dt, scheme, prev=None):
    if scheme == IMEX_BDF2 and prev is not None:
        u_old, fu_old = prev
        rhs = 4.0 * u - u_old + 2.0 * dt * (2.0 * fu - fu_old)
        return be.project(be.helmholtz(rhs, 3.0, 2.0 * dt * params.nu))
    return be.project(_implicit_euler(be, u + dt * fu, params.nu, dt))


# --------------------------------------------------------------------------
# steps
# --------------------------------------------------------------------------

def step_q(Q: TensorField, u: VectorField, params: MaterialParams, dt: float,
           backend: str | None = None, boundary: Optional[BoundaryData] = None,
           safety: float = 0.5) -> TensorField:
    """One IMEX-Euler step of the Q-equation with the velocity held fixed."""
    grid = Q.grid
    be = make_backend(grid, backend)
    q, uu = Q.data, u.data
    _check_cfl(be, q, uu, params, dt, safety)
    nq = q_forcing(be, q, uu, params)
    q_new = _q_update(be, q, nq, params, dt, IMEX_EULER)
    return TensorField(grid, _impose_q(grid, q_new, boundary))


def step_coupled(state: SimState, frozen: bool = False) -> SimState:
    """Momentum step then Q step with the updated velocity; ``t += dt``.

    With ``frozen=True`` the velocity is held fixed (regularisation runs).
    """
    grid = state.grid
    be = make_backend(grid, state.backend)
    params, dt = state.params, state.dt
    u, q = state.u.data, state.Q.data
    cfl = _check_cfl(be, q, u, params, dt, state.safety)

    hist = state.history if state.scheme == IMEX_BDF2 else None
    dq = be.grad(q)
    if frozen:
        u_new, fu = u, None
    else:
        fu = momentum_forcing(be, u, q, params, dq=dq)
        u_new = impose_velocity_boundary(grid, _u_update(be, u, fu, params, dt, state.scheme,
                                          None if hist is None else (hist[0], hist[2])))
    nq = q_forcing(be, q, u_new, params, dq=dq)
    q_new = _impose_q(grid, _q_update(be, q, nq, params, dt, state.scheme,
                                      None if hist is None else (hist[1], hist[3])),
                      state.boundary)

    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(q_new))):
        raise SolverBlowup(f"non-finite field at t = {state.t + dt:.6g}", state)

    if frozen:
        div_res = 0.0
    else:
        div_res = float(np.sqrt(np.mean(be.div(u_new) ** 2)))
    new_u = VectorField(grid, u_new)
    new_q = TensorField(grid, q_new)
    kin, el, bulk = energy_parts(be, new_u.data, new_q.data, params)
    return replace(
        state,
        t=state.t + dt,
        u=new_u,
        Q=new_q,
        diagnostics=StepDiagnostics(div_res, cfl, kin + el + bulk),
        history=(u, q, fu, nq) if state.scheme == IMEX_BDF2 else None,
    )


def energy_parts(be, u, q, params: MaterialParams) -> tuple[float, float, float]:
    """``(kinetic, elastic, bulk)`` by cell-sum quadrature."""
    area = be.grid.cell_area
    kinetic = 0.5 * float(np.sum(u ** 2)) * area
    dq = be.grad(q)
    elastic = 0.5 * params.L * float(np.sum(packed_trace_q2(dq[0]) + packed_trace_q2(dq[1]))) * area
    bulk = float(np.sum(packed_bulk_density(q, params))) * area
    return kinetic, elastic, bulk


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def run(state: SimState, t_end: float, monitor_interval: float,
        monitor: Callable[[SimState], object], adaptive: bool = False,
        frozen_velocity: bool = False, snapshot_dir: Optional[str] = None,
        max_halvings: int = 20):
    """Advance to ``t_end`` emitting ``monitor(state)`` at every multiple of
    ``monitor_interval`` (and at the start).

    Steps are shortened to land exactly on monitor times.  With ``adaptive``
    a CFL rejection halves ``dt`` and retries; otherwise it propagates.
    Returns ``(records, final_state)``; on failure the records gathered so far
    are attached to the exception as ``.records``.
    """
    records = [monitor(state)]
    if t_end <= 0:
        return records, state
    n_out = max(1, int(round(t_end / monitor_interval)))
    targets = [min(t_end, k * monitor_interval) for k in range(1, n_out + 1)]
    if targets[-1] < t_end:
        targets.append(t_end)
    base_dt = state.dt
    try:
        for target in targets:
            # integer step count to the next record keeps runs reproducible
            while state.t < target - 1e-12 * max(1.0, target):
                remaining = target - state.t
                n = max(1, math.ceil(remaining / base_dt - 1e-9))
                dt = remaining / n
                if abs(dt - state.dt) > 1e-9 * dt:
                    state = replace(state, dt=dt, history=None)
                try:
                    state = step_coupled(state, frozen=frozen_velocity)
                except CFLViolation:
                    if not adaptive or max_halvings == 0:
                        raise
                    max_halvings -= 1
                    base_dt *= 0.5
                    log.info("CFL rejection at t=%.6g, dt -> %.3e", state.t, base_dt)
            state = replace(state, t=target)
            records.append(monitor(state))
    except SolverBlowup as exc:
        path = None
        if snapshot_dir is not None:
            Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
            path = str(Path(snapshot_dir) / "last_good_Q.bin")
            write_snapshot(path, exc.last_good.Q, exc.last_good.t)
        err = SolverBlowup(str(exc), exc.last_good, path)
        err.records = records
        raise err from exc
    except CFLViolation as exc:
        exc.records = records
        raise
    return records, state
