"""Grid fields and discrete calculus on 2-D domains.

Two backends share one interface and operate on raw arrays whose last two
axes are ``(nx, ny)``:

* :class:`SpectralBackend` - periodic box, Fourier differentiation, exact
  Leray projection, 2/3-rule dealiasing.
* :class:`FDBackend` - second-order central differences, either periodic or
  with Dirichlet data held on the outermost ring of cells.

Cells are cell-centred; on a Dirichlet grid the outer ring carries the
boundary values and is never evolved.  :class:`Field` wrappers bind an array
to its grid for the public, grid-checked operators at the bottom of the file.
"""

from __future__ import annotations

import csv
import functools
import math
import struct
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .tensor_core import packed_trace_q2

PERIODIC = "periodic"
DIRICHLET = "dirichlet"
SPECTRAL = "spectral"
FD = "fd"
BOUNDARIES = (PERIODIC, DIRICHLET)


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.nx < 8 or self.ny < 8 or self.nx % 2 or self.ny % 2:
            raise ValueError(f"grid needs even nx, ny >= 8, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell coordinates as ``(X, Y)`` arrays of shape ``(nx, ny)``."""
        off = 0.0 if self.boundary == PERIODIC else 0.5
        x = (np.arange(self.nx) + off) * self.hx
        y = (np.arange(self.ny) + off) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def ring_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        if self.boundary == DIRICHLET:
            m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def refined(self, factor: int = 2) -> "Grid2D":
        return Grid2D(self.nx * factor, self.ny * factor, self.lx, self.ly, self.boundary)


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------

class SpectralBackend:
    """Fourier pseudo-spectral operators on a periodic grid (real FFTs)."""

    kind = SPECTRAL

    def __init__(self, grid: Grid2D):
        if grid.boundary != PERIODIC:
            raise ValueError("spectral backend needs a periodic grid")
        self.grid = grid
        nx, ny = grid.shape
        kx = 2 * np.pi / grid.lx * np.fft.fftfreq(nx, 1.0 / nx)
        ky = 2 * np.pi / grid.ly * np.fft.rfftfreq(ny, 1.0 / ny)
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        self.k2 = KX ** 2 + KY ** 2
        # first derivatives drop the Nyquist mode, whose sign is ambiguous
        self.ikx = 1j * np.where(np.abs(np.fft.fftfreq(nx, 1.0 / nx)) == nx // 2, 0.0, 1.0)[:, None] * KX
        self.iky = 1j * np.where(np.arange(ny // 2 + 1) == ny // 2, 0.0, 1.0)[None, :] * KY
        # the projection uses the symbols of the first derivatives so that it
        # stays an exact orthogonal projector on the Nyquist modes as well
        kk = np.abs(self.ikx) ** 2 + np.abs(self.iky) ** 2
        self.inv_k2 = np.where(kk > 0, 1.0 / np.where(kk > 0, kk, 1.0), 0.0)
        mx = np.abs(np.fft.fftfreq(nx, 1.0 / nx)) < nx / 3.0
        my = np.arange(ny // 2 + 1) < ny / 3.0
        self.dealias_mask = mx[:, None] & my[None, :]

    def fft(self, f):
        return np.fft.rfft2(f, axes=(-2, -1))

    def ifft(self, fh):
        return np.fft.irfft2(fh, s=self.grid.shape, axes=(-2, -1))

    def dx(self, f):
        return self.ifft(self.ikx * self.fft(f))

    def dy(self, f):
        return self.ifft(self.iky * self.fft(f))

    def grad(self, f):
        """Gradient along a new leading axis of length 2."""
        fh = self.fft(f)
        return np.stack([self.ifft(self.ikx * fh), self.ifft(self.iky * fh)])

    def lap(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def div(self, v):
        return self.ifft(self.ikx * self.fft(v[0]) + self.iky * self.fft(v[1]))

    def dealias(self, f):
        return self.ifft(self.dealias_mask * self.fft(f))

    def project(self, u):
        uh = self.fft(u)
        kdotu = (self.ikx * uh[0] + self.iky * uh[1]) * self.inv_k2
        # u - grad(inv_lap(div u))
        return self.ifft(np.stack([uh[0] + self.ikx * kdotu, uh[1] + self.iky * kdotu]))

    def heat(self, f, t):
        """Exact heat semigroup ``exp(t Lap) f``."""
        return self.ifft(np.exp(-t * self.k2) * self.fft(f))

    def helmholtz(self, rhs, alpha, beta):
        """Solve ``(alpha - beta Lap) x = rhs``."""
        return self.ifft(self.fft(rhs) / (alpha + beta * self.k2))


class FDBackend:
    """Second-order finite differences, periodic or Dirichlet-ring."""

    kind = FD

    def __init__(self, grid: Grid2D):
        self.grid = grid
        self.periodic = grid.boundary == PERIODIC
        nx, ny = grid.shape
        hx, hy = grid.hx, grid.hy
        if self.periodic:
            kx = 2 * np.pi / grid.lx * np.fft.fftfreq(nx, 1.0 / nx)
            ky = 2 * np.pi / grid.ly * np.fft.fftfreq(ny, 1.0 / ny)
            KX, KY = np.meshgrid(kx, ky, indexing="ij")
            # symbols of the central first difference and the 5-point Laplacian
            self.sx = np.sin(KX * hx) / hx
            self.sy = np.sin(KY * hy) / hy
            self.lap_symbol = -(4 / hx ** 2) * np.sin(KX * hx / 2) ** 2 - (4 / hy ** 2) * np.sin(KY * hy / 2) ** 2
        else:
            self.ring = grid.ring_mask()
            self.interior = ~self.ring
            self._lap_matrix = _dirichlet_laplacian(grid)
            self._factor_cache: dict = {}
            self._neumann_lu = None

    # ---- differences -----------------------------------------------------
    def _d(self, f, axis, h):
        f = np.asarray(f, dtype=float)
        if self.periodic:
            return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)
        out = np.empty_like(f)
        mid = [slice(None)] * f.ndim
        fw = [slice(None)] * f.ndim
        bw = [slice(None)] * f.ndim
        mid[axis], fw[axis], bw[axis] = slice(1, -1), slice(2, None), slice(None, -2)
        out[tuple(mid)] = (f[tuple(fw)] - f[tuple(bw)]) / (2 * h)
        i0 = [slice(None)] * f.ndim

        def at(k):
            i0[axis] = k
            return f[tuple(i0)]

        first = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h)
        last = (3 * at(-1) - 4 * at(-2) + at(-3)) / (2 * h)
        i0[axis] = 0
        out[tuple(i0)] = first
        i0[axis] = -1
        out[tuple(i0)] = last
        return out

    def _d2(self, f, axis, h):
        f = np.asarray(f, dtype=float)
        if self.periodic:
            return (np.roll(f, -1, axis) - 2 * f + np.roll(f, 1, axis)) / h ** 2
        out = np.empty_like(f)
        n = f.shape[axis]
        c = np.moveaxis(f, axis, 0)
        o = np.moveaxis(out, axis, 0)
        o[1:-1] = (c[2:] - 2 * c[1:-1] + c[:-2]) / h ** 2
        o[0] = (2 * c[0] - 5 * c[1] + 4 * c[2] - c[3]) / h ** 2
        o[n - 1] = (2 * c[-1] - 5 * c[-2] + 4 * c[-3] - c[-4]) / h ** 2
        return out

    def dx(self, f):
        return self._d(f, -2, self.grid.hx)

    def dy(self, f):
        return self._d(f, -1, self.grid.hy)

    def grad(self, f):
        return np.stack([self.dx(f), self.dy(f)])

    def lap(self, f):
        return self._d2(f, -2, self.grid.hx) + self._d2(f, -1, self.grid.hy)

    def div(self, v):
        return self.dx(v[0]) + self.dy(v[1])

    def dealias(self, f):
        return np.asarray(f, dtype=float)

    # ---- projection ------------------------------------------------------
    def project(self, u):
        u = np.asarray(u, dtype=float)
        if self.periodic:
            uh = np.fft.fft2(u, axes=(-2, -1))
            s2 = self.sx ** 2 + self.sy ** 2
            inv = np.where(s2 > 1e-14 * s2.max(), 1.0 / np.where(s2 > 0, s2, 1.0), 0.0)
            sdotu = (self.sx * uh[0] + self.sy * uh[1]) * inv
            # modes invisible to the central difference are left untouched
            out = np.stack([uh[0] - self.sx * sdotu, uh[1] - self.sy * sdotu])
            return np.fft.ifft2(out, axes=(-2, -1)).real
        phi = self._neumann_poisson(self.div(u))
        out = u - self.grad(phi)
        out[:, self.ring] = 0.0
        return out

    def _neumann_poisson(self, rhs):
        g = self.grid
        if self._neumann_lu is None:
            A = _neumann_laplacian(g).tolil()
            # pin one value to remove the constant null space
            A[0, :] = 0.0
            A[0, 0] = 1.0
            self._neumann_lu = spla.splu(A.tocsc())
        r = np.asarray(rhs, dtype=float).ravel().copy()
        r -= r.mean()
        r[0] = 0.0
        return self._neumann_lu.solve(r).reshape(g.shape)

    # ---- implicit diffusion / semigroup ---------------------------------
    def helmholtz(self, rhs, alpha, beta):
        """Solve ``(alpha - beta Lap_h) x = rhs``; Dirichlet rings are kept."""
        rhs = np.asarray(rhs, dtype=float)
        if self.periodic:
            rh = np.fft.fft2(rhs, axes=(-2, -1))
            return np.fft.ifft2(rh / (alpha - beta * self.lap_symbol), axes=(-2, -1)).real
        key = (float(alpha), float(beta))
        lu = self._factor_cache.get(key)
        if lu is None:
            n = self.grid.nx * self.grid.ny
            A = alpha * sp.identity(n, format="csr") - beta * self._lap_matrix
            # ring rows reduce to alpha * x = rhs
            lu = spla.splu(A.tocsc())
            if len(self._factor_cache) > 8:
                self._factor_cache.clear()
            self._factor_cache[key] = lu
        lead = rhs.shape[:-2]
        flat = rhs.reshape(-1, self.grid.nx * self.grid.ny)
        out = np.stack([lu.solve(row) for row in flat])
        return out.reshape(lead + self.grid.shape)

    def heat(self, f, t):
        f = np.asarray(f, dtype=float)
        if self.periodic:
            fh = np.fft.fft2(f, axes=(-2, -1))
            return np.fft.ifft2(np.exp(t * self.lap_symbol) * fh, axes=(-2, -1)).real
        lead = f.shape[:-2]
        flat = f.reshape(-1, self.grid.nx * self.grid.ny)
        out = np.stack([spla.expm_multiply(t * self._lap_matrix, row) for row in flat])
        return out.reshape(lead + self.grid.shape)


def _index(grid: Grid2D):
    return np.arange(grid.nx * grid.ny).reshape(grid.shape)


def _dirichlet_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """5-point Laplacian on interior cells; ring rows are zero (held fixed)."""
    idx = _index(grid)
    rows, cols, vals = [], [], []
    cx, cy = 1 / grid.hx ** 2, 1 / grid.hy ** 2
    inner = idx[1:-1, 1:-1].ravel()
    for di, dj, w in ((1, 0, cx), (-1, 0, cx), (0, 1, cy), (0, -1, cy)):
        nb = idx[1 + di:grid.nx - 1 + di, 1 + dj:grid.ny - 1 + dj].ravel()
        rows.append(inner)
        cols.append(nb)
        vals.append(np.full(inner.size, w))
    rows.append(inner)
    cols.append(inner)
    vals.append(np.full(inner.size, -2 * (cx + cy)))
    n = grid.nx * grid.ny
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _neumann_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """5-point Laplacian on all cells with reflecting (zero-flux) ghosts."""
    def lap1(n, h):
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / h ** 2

    Ix = sp.identity(grid.nx)
    Iy = sp.identity(grid.ny)
    return (sp.kron(lap1(grid.nx, grid.hx), Iy) + sp.kron(Ix, lap1(grid.ny, grid.hy))).tocsr()


@functools.lru_cache(maxsize=32)
def make_backend(grid: Grid2D, kind: str | None = None):
    """Shared backend for ``grid``; spectral by default on periodic grids."""
    if kind is None:
        kind = SPECTRAL if grid.boundary == PERIODIC else FD
    if kind == SPECTRAL:
        return SpectralBackend(grid)
    if kind == FD:
        return FDBackend(grid)
    raise ValueError(f"unknown backend {kind!r}")


# --------------------------------------------------------------------------
# field wrappers
# --------------------------------------------------------------------------

@dataclass
class Field:
    grid: Grid2D
    data: np.ndarray

    ncomp: ClassVar[int] = 1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape == self.grid.shape and self.ncomp == 1:
            self.data = self.data[None]
        if self.data.shape != (self.ncomp,) + self.grid.shape:
            raise GridMismatch(f"{type(self).__name__} data shape {self.data.shape} "
                               f"!= {(self.ncomp,) + self.grid.shape}")

    @classmethod
    def zeros(cls, grid: Grid2D):
        return cls(grid, np.zeros((cls.ncomp,) + grid.shape))

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data ** 2, axis=0))


class ScalarField(Field):
    ncomp = 1


class VectorField(Field):
    ncomp = 2


class TensorField(Field):
    """Packed Q-tensor per cell."""

    ncomp = 5

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(packed_trace_q2(self.data))


class SkewField(Field):
    """Packed ``(w12, w13, w23)`` per cell."""

    ncomp = 3

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(2.0 * np.sum(self.data ** 2, axis=0))


class StressField(Field):
    """In-plane 2x2 block ``(s11, s12, s21, s22)`` per cell."""

    ncomp = 4


def _same_grid(*fields: Field) -> Grid2D:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid {f.grid} != {g}")
    return g


def _wrap_like(field: Field, data) -> Field:
    return type(field)(field.grid, data)


def grad(f: ScalarField, backend: str | None = None) -> VectorField:
    be = make_backend(f.grid, backend)
    return VectorField(f.grid, be.grad(f.data[0]))


def laplacian(F: Field, backend: str | None = None) -> Field:
    be = make_backend(F.grid, backend)
    return _wrap_like(F, be.lap(F.data))


def div(u: VectorField, backend: str | None = None) -> ScalarField:
    be = make_backend(u.grid, backend)
    return ScalarField(u.grid, be.div(u.data)[None])


def div_tensor(T: StressField, backend: str | None = None) -> VectorField:
    """Row divergence ``(div T)_i = d_j T_ij``."""
    be = make_backend(T.grid, backend)
    s11, s12, s21, s22 = T.data
    return VectorField(T.grid, np.stack([be.dx(s11) + be.dy(s12), be.dx(s21) + be.dy(s22)]))


def advect(u: VectorField, F: Field, backend: str | None = None) -> Field:
    """``(u . grad) F`` componentwise, dealiased on the spectral backend."""
    g = _same_grid(u, F)
    be = make_backend(g, backend)
    out = u.data[0] * be.dx(F.data) + u.data[1] * be.dy(F.data)
    return _wrap_like(F, be.dealias(out))


def leray_project(u: VectorField, backend: str | None = None) -> VectorField:
    be = make_backend(u.grid, backend)
    return VectorField(u.grid, be.project(u.data))


def packed_vorticity(be, u) -> np.ndarray:
    w12 = 0.5 * (be.dx(u[1]) - be.dy(u[0]))
    zero = np.zeros_like(w12)
    return np.stack([w12, zero, zero])


def vorticity_skew(u: VectorField, backend: str | None = None) -> SkewField:
    """Skew part of the velocity gradient; only ``w12 = (dx u2 - dy u1)/2`` is nonzero in-plane."""
    be = make_backend(u.grid, backend)
    return SkewField(u.grid, packed_vorticity(be, u.data))


def mollify(F: Field, delta: float, backend: str | None = None) -> Field:
    """Gaussian smoothing at scale ``delta``: the heat semigroup run for ``delta^2/2``."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta!r}")
    if delta == 0:
        return _wrap_like(F, F.data.copy())
    be = make_backend(F.grid, backend)
    return _wrap_like(F, be.heat(F.data, 0.5 * delta ** 2))


def _sq_norm_density(F: Field) -> np.ndarray:
    if isinstance(F, TensorField):
        return packed_trace_q2(F.data)
    if isinstance(F, SkewField):
        return 2.0 * np.sum(F.data ** 2, axis=0)
    return np.sum(F.data ** 2, axis=0)


def l2(F: Field) -> float:
    return float(np.sqrt(np.sum(_sq_norm_density(F)) * F.grid.cell_area))


def linf(F: Field) -> float:
    return float(np.sqrt(np.max(_sq_norm_density(F))))


# --------------------------------------------------------------------------
# snapshots
# --------------------------------------------------------------------------

_HEADER = struct.Struct("<qqddqd")
_KINDS = {1: ScalarField, 2: VectorField, 3: SkewField, 4: StressField, 5: TensorField}


def write_snapshot(path, F: Field, time: float = 0.0) -> None:
    """Header ``(nx, ny, lx, ly, components, time)`` then row-major cells."""
    g = F.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.nx, g.ny, g.lx, g.ly, F.ncomp, float(time)))
        fh.write(np.ascontiguousarray(np.moveaxis(F.data, 0, -1), dtype="<f8").tobytes())


def read_snapshot(path, boundary: str = PERIODIC) -> tuple[Field, float]:
    with open(path, "rb") as fh:
        nx, ny, lx, ly, ncomp, time = _HEADER.unpack(fh.read(_HEADER.size))
        cells = np.frombuffer(fh.read(), dtype="<f8").reshape(nx, ny, ncomp)
    grid = Grid2D(nx, ny, lx, ly, boundary)
    return _KINDS[ncomp](grid, np.moveaxis(cells, -1, 0).copy()), time


def write_csv(path, F: Field) -> None:
    X, Y = F.grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"] + [f"c{k}" for k in range(F.ncomp)])
        for i in range(F.grid.nx):
            for j in range(F.grid.ny):
                w.writerow([repr(float(X[i, j])), repr(float(Y[i, j]))]
                           + [repr(float(v)) for v in F.data[:, i, j]])


__all__ = [
    "Grid2D", "Field", "ScalarField", "VectorField", "TensorField", "SkewField",
    "StressField", "SpectralBackend", "FDBackend", "make_backend", "grad", "laplacian",
    "div", "div_tensor", "advect", "leray_project", "vorticity_skew", "mollify",
    "l2", "linf", "write_snapshot", "read_snapshot", "write_csv",
]
