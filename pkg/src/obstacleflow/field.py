"""Stream functions and velocities for vortex blobs around several obstacles.

The velocity is ``u = grad_perp psi0 + sum_i alpha_i grad_perp psi_i``, with
``grad_perp = (-d/dy, d/dx)``. It is built from the following pieces.

* ``psi_tilde0``: the blob stream function for the first obstacle alone,
  built from its exterior map with image vortices at ``T(y)* = T(y)/|T(y)|^2``.
* ``psi_n``: a bounded harmonic correction that cancels ``psi_tilde0`` on
  every boundary, so that ``psi0 = psi_tilde0 + psi_n`` vanishes on all of them.
* ``psi_i``: harmonic fields with unit circulation around obstacle ``i``,
  zero circulation around the others, and constant on every boundary.

Harmonic pieces are expanded in mapped multipoles ``T_j(z)^{-m}`` and
logarithms ``ln|T_j|`` fitted to boundary data by least squares. The
logarithm coefficients are fixed exactly, so circulations are exact.

Velocities are computed through the complex derivative ``Phi'`` of a complex
potential with ``Re Phi = psi``. Then ``u1 = Im Phi'`` and ``u2 = Re Phi'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, ValidationError

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

TWO_PI = 2.0 * np.pi

NTERMS_SCHEDULE = (24, 32, 48, 64, 96)


@dataclass(frozen=True)
class VortexBlobs:
    """Point vortices regularised by a Rankine core.

    Attributes
    ----------
    positions : ndarray, shape (J, 2)
    strengths : ndarray, shape (J,)
        Circulations ``Gamma_j``.
    core : float
        Core radius ``eps`` shared by all blobs.
    time : float
    """

    positions: FloatArray
    strengths: FloatArray
    core: float = 0.05
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, float).reshape(-1, 2)
        gam = np.asarray(self.strengths, float).reshape(-1)
        if len(pos) != len(gam):
            raise ValidationError("positions and strengths differ in length", field="gamma")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("blob positions must be finite", field="positions")
        if not np.all(np.isfinite(gam)):
            raise ValidationError("blob strengths must be finite", field="gamma")
        if not self.core > 0:
            raise ValidationError("blob core radius must be positive", field="core")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "strengths", gam)

    @property
    def z(self) -> ComplexArray:
        return self.positions[:, 0] + 1j * self.positions[:, 1]

    def __len__(self):
        return len(self.strengths)

    def moved(self, positions, time=None) -> "VortexBlobs":
        return replace(self, positions=np.asarray(positions, float),
                       time=self.time if time is None else time)

    def reversed(self) -> "VortexBlobs":
        return replace(self, strengths=-self.strengths)


def _cplx(x) -> ComplexArray:
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(complex).ravel()
    a = np.asarray(a, float).reshape(-1, 2)
    return a[:, 0] + 1j * a[:, 1]


def _vel(dphi: ComplexArray) -> FloatArray:
    return np.column_stack([dphi.imag, dphi.real])


def fullplane_biot_savart(blobs: VortexBlobs, x) -> FloatArray:
    """Velocity of the blobs in the whole plane.

    ``u(x) = sum_j Gamma_j (x - x_j)^perp / (2 pi max(|x - x_j|^2, eps^2))``.
    A blob contributes nothing at its own centre.
    """
    z = _cplx(x)
    d = z[:, None] - blobs.z[None, :]
    r2 = np.maximum(np.abs(d) ** 2, blobs.core ** 2)
    w = (1j * d / r2) @ blobs.strengths / TWO_PI
    return np.column_stack([w.real, w.imag])


def kernel_psi0_single(tmap, blobs: VortexBlobs, x) -> FloatArray:
    """Single-obstacle blob stream function with images.

    ``(1/2pi) sum_j Gamma_j ln(|T(x) - T(y_j)| / (|T(x) - T(y_j)*| |T(y_j)|))``
    with the direct term smoothed by a Rankine core of radius
    ``eps |T'(y_j)|`` in the mapped plane. Vanishes on the boundary.
    """
    z = _cplx(x)
    tx = tmap.evaluate(z)
    ty, dty, _ = tmap.jet(blobs.z)
    epsm = blobs.core * np.abs(dty)
    rho = np.abs(tx[:, None] - ty[None, :])
    direct = np.where(rho < epsm, np.log(epsm) + 0.5 * (rho ** 2 / epsm ** 2 - 1.0), np.log(np.maximum(rho, epsm)))
    image = np.log(np.abs(tx[:, None] - ty[None, :] / np.abs(ty[None, :]) ** 2)) + np.log(np.abs(ty[None, :]))
    return (direct - image) @ blobs.strengths / TWO_PI


def kernel_dphi_single(tmap, blobs: VortexBlobs, z: ComplexArray, self_index=None) -> ComplexArray:
    """Complex derivative of the single-obstacle blob potential at ``z``.

    If ``self_index`` is given, ``z`` are the blob centres themselves and the
    singular self term is replaced by its regular part ``T''/(2 T')``.
    """
    tx, dtx, d2tx = tmap.jet(z)
    ty, dty, _ = tmap.jet(blobs.z)
    epsm = blobs.core * np.abs(dty)
    diff = tx[:, None] - ty[None, :]
    rho2 = np.abs(diff) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.minimum(1.0, rho2 / epsm[None, :] ** 2) / diff
    direct = np.where(rho2 > 0, direct, 0.0)
    image = 1.0 / (tx[:, None] - ty[None, :] / np.abs(ty[None, :]) ** 2)
    out = dtx * ((direct - image) @ blobs.strengths) / TWO_PI
    if self_index is not None:
        out = out + blobs.strengths * d2tx / (2.0 * dtx) / TWO_PI
    return out


def harmonic_psi_single(tmap, x) -> FloatArray:
    """``(1/2pi) ln|T(x)|``: unit circulation, zero on the boundary."""
    return np.log(np.abs(tmap.evaluate(_cplx(x)))) / TWO_PI


class MultipoleBasis:
    """Mapped-multipole basis for harmonic functions outside ``k`` obstacles.

    Columns, in order:

    * ``const``: the constant 1;
    * ``log``: ``(1/2pi) (ln|T_l| - ln|T_1|)`` for ``l = 2..k``, which is bounded;
    * ``decay``: ``Re T_j^{-m}`` and ``Im T_j^{-m}`` for every obstacle ``j``
      and ``m = 1..nterms``.
    """

    def __init__(self, maps: Sequence, nterms: int):
        self.maps = list(maps)
        self.nterms = int(nterms)
        self.k = len(self.maps)

    @property
    def size(self):
        return 1 + (self.k - 1) + 2 * self.k * self.nterms

    def _jets(self, z):
        return [(m.evaluate(z), m.derivative(z)) for m in self.maps]

    def values(self, z, jets=None) -> FloatArray:
        jets = jets or self._jets(z)
        cols = [np.ones(len(z))]
        l1 = np.log(np.abs(jets[0][0]))
        for t, _ in jets[1:]:
            cols.append((np.log(np.abs(t)) - l1) / TWO_PI)
        for t, _ in jets:
            inv = 1.0 / t
            p = np.ones_like(inv)
            for _m in range(self.nterms):
                p = p * inv
                cols.append(p.real)
                cols.append(p.imag)
        return np.column_stack(cols)

    def dphi(self, z, jets=None) -> ComplexArray:
        """Complex derivative of each basis column's potential."""
        jets = jets or self._jets(z)
        cols = [np.zeros(len(z), complex)]
        g1 = jets[0][1] / jets[0][0]
        for t, dt in jets[1:]:
            cols.append((dt / t - g1) / TWO_PI)
        for t, dt in jets:
            inv = 1.0 / t
            p = inv.copy()
            for m in range(1, self.nterms + 1):
                base = -m * p * inv * dt  # d/dz T^-m
                cols.append(base)
                cols.append(-1j * base)
                p = p * inv
        return np.column_stack(cols)

    def decay_slice(self):
        return slice(self.k, self.size)


@dataclass(frozen=True)
class HarmonicField:
    """Harmonic field with unit circulation around obstacle ``owner``.

    ``psi(x) = (1/2pi) ln|T_owner(x)| + basis(x) . coeffs`` where the basis
    carries a constant and decaying multipoles only. It equals
    ``constants[l]`` on boundary ``l`` with ``constants[owner] = 0``.
    """

    owner: int
    coeffs: FloatArray
    constants: FloatArray
    residual: float
    basis: MultipoleBasis = field(repr=False)

    def _cols(self):
        k = self.basis.k
        keep = np.r_[0, np.arange(k, self.basis.size)]
        return keep

    def value(self, x) -> FloatArray:
        z = _cplx(x)
        b = self.basis.values(z)[:, self._cols()]
        return harmonic_psi_single(self.basis.maps[self.owner], z) + b @ self.coeffs

    def dphi(self, z, jets=None) -> ComplexArray:
        t, dt = (jets[self.owner] if jets else (self.basis.maps[self.owner].evaluate(z),
                                                 self.basis.maps[self.owner].derivative(z)))
        b = self.basis.dphi(z, jets)[:, self._cols()]
        return dt / t / TWO_PI + b @ self.coeffs

    def velocity(self, x) -> FloatArray:
        return _vel(self.dphi(_cplx(x)))


def _boundary_points(maps, samples):
    return [np.asarray(s, complex) for s in samples]


def solve_harmonic_multi(maps: Sequence, boundaries: Sequence, nterms: int = 24) -> list:
    """Harmonic fields ``psi_i``, one per obstacle.

    Parameters
    ----------
    maps : sequence of exterior maps, one per obstacle
    boundaries : sequence of complex arrays
        Boundary samples of each obstacle's curve.
    nterms : int
        Multipole order per obstacle.
    """
    k = len(maps)
    basis = MultipoleBasis(maps, nterms)
    pts = np.concatenate(boundaries)
    label = np.concatenate([np.full(len(b), l) for l, b in enumerate(boundaries)])
    B = basis.values(pts)
    keep = np.r_[0, np.arange(k, basis.size)]
    Bk = B[:, keep]
    out = []
    for i in range(k):
        others = [l for l in range(k) if l != i]
        # unknowns: multipole coefficients then constants on the other boundaries
        C = np.zeros((len(pts), len(others)))
        for c, l in enumerate(others):
            C[label == l, c] = -1.0
        A = np.hstack([Bk, C])
        rhs = -harmonic_psi_single(maps[i], pts)
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        res = np.abs(A @ sol - rhs).max()
        consts = np.zeros(k)
        consts[others] = sol[Bk.shape[1]:]
        out.append(HarmonicField(i, sol[:Bk.shape[1]], consts, float(res), basis))
    return out


@dataclass(frozen=True)
class CorrectionSolver:
    """Precomputed least-squares solver for the bounded correction ``psi_n``.

    ``psi_n`` is harmonic outside all obstacles, bounded, and equals
    ``-psi_tilde0`` on every boundary. Only the right-hand side changes with
    the blobs, so the pseudo-inverse is formed once.
    """

    basis: MultipoleBasis
    points: ComplexArray
    pinv: FloatArray

    @classmethod
    def build(cls, maps, boundaries, nterms=24):
        basis = MultipoleBasis(maps, nterms)
        pts = np.concatenate(boundaries)
        B = basis.values(pts)
        scale = np.linalg.norm(B, axis=0)
        scale[scale == 0] = 1.0
        pinv = np.linalg.pinv(B / scale, rcond=1e-13) / scale[:, None]
        return cls(basis, pts, pinv)

    def solve(self, blobs: VortexBlobs):
        data = -kernel_psi0_single(self.basis.maps[0], blobs, self.points)
        return self.pinv @ data, data


@dataclass(frozen=True)
class StreamDecomposition:
    """Velocity representation for one blob configuration.

    Attributes
    ----------
    solver : FlowSolver
    blobs : VortexBlobs
    correction : ndarray
        Coefficients of ``psi_n`` in the multipole basis.
    alpha : ndarray, shape (k,)
        Coefficients of the harmonic fields.
    gamma : ndarray, shape (k,)
        Prescribed circulations.
    """

    solver: "FlowSolver"
    blobs: VortexBlobs
    correction: FloatArray
    alpha: FloatArray
    gamma: FloatArray
    correction_residual: float = 0.0

    @property
    def kernel_circulations(self) -> FloatArray:
        """Exact circulation of ``grad_perp psi0`` around each obstacle."""
        return self.solver.psi0_circulations(self.blobs, self.correction)

    def _dphi0(self, z, jets, self_index=None):
        s = self.solver
        out = kernel_dphi_single(s.maps[0], self.blobs, z, self_index)
        if s.k > 1:
            out = out + s.correction.basis.dphi(z, jets) @ self.correction
        return out

    def complex_velocity(self, z, self_index=None) -> ComplexArray:
        s = self.solver
        jets = s.basis._jets(z)
        out = self._dphi0(z, jets, self_index)
        for a, hf in zip(self.alpha, s.harmonic):
            out = out + a * hf.dphi(z, jets)
        return out

    def velocity(self, x, check=True) -> FloatArray:
        """Velocity at points ``x``; raises if any point lies inside an obstacle."""
        z = _cplx(x)
        if check and not np.all(self.solver.outside(z)):
            raise DomainError("velocity requested inside an obstacle", field="x")
        return _vel(self.complex_velocity(z))

    def blob_velocities(self) -> FloatArray:
        """Velocity of every blob, keeping only the regular part of its self-induction."""
        return _vel(self.complex_velocity(self.blobs.z, self_index=True))

    def psi0(self, x) -> FloatArray:
        z = _cplx(x)
        s = self.solver
        out = kernel_psi0_single(s.maps[0], self.blobs, z)
        if s.k > 1:
            out = out + s.correction.basis.values(z) @ self.correction
        return out

    def stream(self, x) -> FloatArray:
        z = _cplx(x)
        out = self.psi0(z)
        for a, hf in zip(self.alpha, self.solver.harmonic):
            out = out + a * hf.value(z)
        return out


class FlowSolver:
    """Blob velocities in the exterior of ``k`` obstacles with fixed circulations.

    Parameters
    ----------
    maps : sequence
        Exterior map of each obstacle's curve.
    curves : sequence of JordanCurve
        The curves themselves, used for boundary data and inside tests.
    gamma : array_like, shape (k,)
        Prescribed circulation around each obstacle.
    nterms : int, optional
        Multipole order per obstacle in the harmonic solves. By default the
        order grows through ``NTERMS_SCHEDULE`` until the residual is met.
    residual_tol : float
        Largest accepted boundary residual of the harmonic solves beyond the
        worst map residual. Nearly
        touching obstacles exceed it and raise :class:`DomainError`.
    """

    def __init__(self, maps: Sequence, curves: Sequence, gamma, nterms: int | None = None,
                 residual_tol: float = 1e-6):
        self.maps = list(maps)
        self.curves = list(curves)
        self.k = len(self.maps)
        g = np.asarray(gamma, float).reshape(-1)
        if len(g) != self.k:
            raise ValidationError(f"expected {self.k} circulations, got {len(g)}", field="gamma")
        if not np.all(np.isfinite(g)):
            raise ValidationError("circulations must be finite", field="gamma")
        self.gamma = g
        bnd = [c.z for c in self.curves]
        floor = max(float(getattr(m, "residual", 0.0)) for m in self.maps)
        schedule = NTERMS_SCHEDULE if nterms is None else (int(nterms),)
        for nt in schedule:
            self.nterms = nt
            self.basis = MultipoleBasis(self.maps, nt)
            self.harmonic = solve_harmonic_multi(self.maps, bnd, nt)
            worst = max(h.residual for h in self.harmonic)
            if self.k == 1 or worst <= residual_tol + floor:
                break
        self.correction = CorrectionSolver.build(self.maps, bnd, self.nterms) if self.k > 1 else None
        if self.k > 1 and worst > residual_tol + floor:
            sep = min(self.curves[i].polygon.distance(self.curves[j].polygon)
                      for i in range(self.k) for j in range(i + 1, self.k))
            B = self.correction.basis.values(self.correction.points)
            sv = np.linalg.svd(B / np.linalg.norm(B, axis=0), compute_uv=False)
            raise DomainError(f"obstacles too close to resolve: separation {sep:.3g}, boundary residual "
                              f"{worst:.2e}, condition {sv[0] / sv[-1]:.2e}; raise nterms or move them apart",
                              field="obstacles", separation=float(sep), condition=float(sv[0] / sv[-1]))

    def outside(self, z) -> NDArray[np.bool_]:
        z = _cplx(z)
        pts = np.column_stack([z.real, z.imag])
        ok = np.ones(len(z), bool)
        for c in self.curves:
            ok &= ~c.contains(pts)
        return ok

    def psi0_circulations(self, blobs: VortexBlobs, correction) -> FloatArray:
        circ = np.zeros(self.k)
        circ[0] = -blobs.strengths.sum()
        if self.k > 1:
            d = correction[1:self.k]
            circ[1:] += d
            circ[0] -= d.sum()
        return circ

    def decompose(self, blobs: VortexBlobs, alpha=None) -> StreamDecomposition:
        """Solve the correction and the harmonic coefficients for ``blobs``.

        By default ``alpha_i = gamma_i - circ_i(psi0)`` from the exact
        circulation of ``psi0``. Pass ``alpha`` to override.
        """
        if self.k > 1:
            corr, data = self.correction.solve(blobs)
            B = self.correction.basis.values(self.correction.points)
            res = float(np.abs(B @ corr - data).max()) if len(blobs) else 0.0
        else:
            corr, res = np.zeros(0), 0.0
        if alpha is None:
            alpha = self.gamma - self.psi0_circulations(blobs, corr)
        return StreamDecomposition(self, blobs, corr, np.asarray(alpha, float), self.gamma, res)

    def blob_velocity(self, blobs: VortexBlobs) -> FloatArray:
        return self.decompose(blobs).blob_velocities()


class FreePlane:
    """Blobs with no obstacles."""

    k = 0
    curves: list = []
    gamma = np.zeros(0)

    def outside(self, z):
        return np.ones(len(_cplx(z)), bool)

    def blob_velocity(self, blobs: VortexBlobs) -> FloatArray:
        return fullplane_biot_savart(blobs, blobs.positions)

    def velocity(self, blobs: VortexBlobs, x) -> FloatArray:
        return fullplane_biot_savart(blobs, x)


def velocity(decomp: StreamDecomposition, x) -> FloatArray:
    """Velocity of a decomposition at points outside every obstacle."""
    return decomp.velocity(x)


def compute_alpha(decomp: StreamDecomposition, cutoffs=None, method: str = "exact", **quad) -> FloatArray:
    """Coefficients ``alpha_i = gamma_i - circulation_i(grad_perp psi0)``.

    ``method="exact"`` reads the circulation off the logarithmic
    coefficients. ``method="weak"`` evaluates it with the cutoff formula
    ``-sum_j Gamma_j chi_i(x_j) - int u0 . grad_perp chi_i``.
    """
    if method == "exact":
        return decomp.gamma - decomp.kernel_circulations
    if method != "weak":
        raise ValidationError(f"unknown alpha method {method!r}", field="method")
    if cutoffs is None:
        raise ValidationError("weak alpha needs cutoffs", field="cutoffs")
    from .diagnostics import weak_circulation

    zero = replace(decomp, alpha=np.zeros_like(decomp.alpha))
    circ = np.array([weak_circulation(zero.velocity, decomp.blobs, c, **quad) for c in cutoffs])
    return decomp.gamma - circ


def field_grid(decomp, blobs: VortexBlobs, xlim, ylim, nx: int, ny: int) -> FloatArray:
    """Rows ``x, y, psi, u1, u2`` on a regular grid, NaN inside obstacles."""
    xs = np.linspace(xlim[0], xlim[1], nx)
    ys = np.linspace(ylim[0], ylim[1], ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    out = np.full((len(pts), 5), np.nan)
    out[:, :2] = pts
    if isinstance(decomp, FreePlane):
        out[:, 3:] = fullplane_biot_savart(blobs, pts)
        z = _cplx(pts)
        r = np.abs(z[:, None] - blobs.z[None, :])
        e = blobs.core
        g = np.where(r < e, np.log(e) + 0.5 * (r ** 2 / e ** 2 - 1.0), np.log(np.maximum(r, e)))
        out[:, 2] = (g @ blobs.strengths) / TWO_PI
        return out
    ok = decomp.solver.outside(pts)
    out[ok, 2] = decomp.stream(pts[ok])
    out[ok, 3:] = decomp.velocity(pts[ok], check=False)
    return out
