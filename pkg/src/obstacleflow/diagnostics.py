"""Conserved quantities, weak-form residuals and functional-inequality constants.

All checks here are computed independently of the time stepper:

* weak circulations via the cutoff identity
  ``gamma_i(u) = -int chi_i curl u - int u . grad_perp chi_i``
* blob masses and discrete ``L^q`` norms of the deposited vorticity
* the weak tangency residual ``int u . grad h`` over a band around each obstacle
* the weak momentum residual against divergence-free test fields
* a discrete Poincare constant
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import eigsh
from shapely.geometry import Point
from shapely.ops import polylabel

from .conformal import map_inverse
from .errors import DomainError, ResolutionError, ValidationError
from .geometry import Cutoff, JordanCurve
from .field import FreePlane, VortexBlobs, fullplane_biot_savart

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Diagnostics at one time.

    Attributes
    ----------
    time : float
    l1_mass, signed_mass : float
        ``sum |Gamma_j|`` and ``sum Gamma_j``.
    lq : dict
        ``L^q`` norms of the deposited vorticity keyed by ``q`` (``inf`` for the max norm).
    circulations, alpha : ndarray, shape (k,)
    tangency : float
    """

    time: float
    l1_mass: float
    signed_mass: float
    lq: dict
    circulations: FloatArray
    alpha: FloatArray
    tangency: float = float("nan")

    def row(self) -> list:
        return ([self.time, self.l1_mass, self.signed_mass, self.lq.get(2, np.nan), self.lq.get(np.inf, np.nan)]
                + list(self.circulations) + list(self.alpha) + [self.tangency])


def diagnostics_header(k: int) -> list:
    return (["t", "l1_mass", "signed_mass", "l2_norm", "linf_norm"]
            + [f"circ_{i + 1}" for i in range(k)] + [f"alpha_{i + 1}" for i in range(k)] + ["tangency"])


def _ring_circulation(u_fn, ring: NDArray[np.complex128]) -> float:
    # 3-point Gauss on each chord of the closed polygon through the samples
    a = ring
    b = np.roll(ring, -1)
    g, w = np.polynomial.legendre.leggauss(3)
    tot = 0.0
    for gi, wi in zip(g, w):
        p = a + 0.5 * (gi + 1.0) * (b - a)
        u = u_fn(np.column_stack([p.real, p.imag]))
        dz = b - a
        tot += 0.5 * wi * np.sum(u[:, 0] * dz.real + u[:, 1] * dz.imag)
    return float(tot)


def weak_circulation(u_fn: Callable, blobs: VortexBlobs, cutoff: Cutoff, nodes: int = 8,
                     spacing: float | None = None) -> float:
    """Weak circulation of a velocity field around one obstacle.

    Evaluates ``-int chi curl u - int u . grad_perp chi`` in coarea form,
    ``int_eps^{2eps} w(r) Gamma(r) dr`` with ``w = -d chi/dr`` and ``Gamma(r)``
    the circulation on the level set at distance ``r``.

    Blobs whose cores reach the support of ``chi`` are handled analytically:
    the whole-plane field of a compactly supported vortex paired with its own
    vorticity contributes exactly zero, so their whole-plane velocity is
    subtracted from ``u`` and their vorticity term dropped. What remains is
    smooth across the band, and blobs further out see ``chi = 0``.

    Parameters
    ----------
    u_fn : callable
        Velocity at an array of points, shape (P, 2) -> (P, 2).
    blobs : VortexBlobs
        Source of ``curl u``.
    cutoff : Cutoff
    nodes : int
        Gauss-Legendre nodes across the band.
    spacing : float, optional
        Point spacing along each level set, at most ``eps/4``.
    """
    eps = cutoff.eps
    spacing = eps / 8 if spacing is None else spacing
    if spacing > eps / 4:
        raise ResolutionError("grid too coarse: level-set spacing exceeds eps/4", field="spacing")
    field = u_fn
    if len(blobs):
        d = cutoff.obstacle.distance(blobs.positions)
        reach = np.flatnonzero(d - blobs.core < 2 * eps)
        if len(reach):
            local = VortexBlobs(blobs.positions[reach], blobs.strengths[reach], core=blobs.core)
            field = lambda p: u_fn(p) - fullplane_biot_savart(local, p)
    g, w = np.polynomial.legendre.leggauss(nodes)
    r = eps * (1.5 + 0.5 * g)
    wr = 0.5 * eps * w * cutoff.radial_weight(r)
    band = 0.0
    for rq, wq in zip(r, wr):
        band += wq * sum(_ring_circulation(field, ring) for ring in cutoff.obstacle.level_rings(rq, spacing))
    return band


def blob_masses(blobs: VortexBlobs) -> tuple:
    """``(sum |Gamma|, sum Gamma)``."""
    return float(np.abs(blobs.strengths).sum()), float(blobs.strengths.sum())


def deposit_vorticity(blobs: VortexBlobs, h: float, sub: int = 4):
    """Top-hat deposition of blob vorticity on cells of side ``h``.

    Each blob spreads ``Gamma / (pi eps^2)`` over the cells its core covers,
    weighted by area fractions from ``sub x sub`` subsampling, then rescaled
    so its deposited mass is exactly ``Gamma``.

    Returns
    -------
    keys : ndarray, shape (C, 2) of int
        Cell indices.
    omega : ndarray, shape (C,)
        Cell-averaged vorticity.
    """
    e = blobs.core
    if not h > 0:
        raise ValidationError("grid spacing must be positive", field="h")
    if h > e / 2:
        raise ResolutionError("grid too coarse for the blob core", field="h")
    nc = int(np.ceil(e / h)) + 1
    off = np.arange(-nc, nc + 1)
    OI, OJ = np.meshgrid(off, off, indexing="ij")
    OI = OI.ravel()
    OJ = OJ.ravel()
    s = (np.arange(sub) + 0.5) / sub
    SX, SY = np.meshgrid(s, s, indexing="ij")
    SX = SX.ravel()
    SY = SY.ravel()
    base = np.floor(blobs.positions / h).astype(np.int64)
    keys_all, vals_all = [], []
    for j in range(len(blobs)):
        ci = base[j, 0] + OI
        cj = base[j, 1] + OJ
        px = (ci[:, None] + SX[None, :]) * h - blobs.positions[j, 0]
        py = (cj[:, None] + SY[None, :]) * h - blobs.positions[j, 1]
        frac = np.mean(px * px + py * py < e * e, axis=1)
        area = frac.sum() * h * h
        if area <= 0:
            raise ResolutionError("blob core falls between grid samples", field="h")
        keep = frac > 0
        keys_all.append(np.column_stack([ci[keep], cj[keep]]))
        vals_all.append(frac[keep] * blobs.strengths[j] / area)
    if not keys_all:
        return np.zeros((0, 2), np.int64), np.zeros(0)
    keys = np.vstack(keys_all)
    vals = np.concatenate(vals_all)
    uk, inv = np.unique(keys, axis=0, return_inverse=True)
    omega = np.zeros(len(uk))
    np.add.at(omega, inv.ravel(), vals)
    return uk, omega


def lq_norm_estimate(blobs: VortexBlobs, q, h: float | None = None) -> float:
    """``L^q`` norm of the deposited vorticity; ``q = inf`` gives the max norm."""
    h = blobs.core / 4 if h is None else h
    q = float(q)
    if q < 1:
        raise ValidationError("q must be at least 1", field="q")
    _, om = deposit_vorticity(blobs, h)
    if len(om) == 0:
        return 0.0
    if np.isinf(q):
        return float(np.abs(om).max())
    return float((np.sum(np.abs(om) ** q) * h * h) ** (1.0 / q))


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


class TangencyQuadrature:
    """Quadrature for ``int u . grad h`` on a mapped band around each obstacle.

    The band around obstacle ``i`` is ``1 < |T_i(x)| < rho2``, integrated in
    the mapped plane with Gauss-Legendre nodes in the radius and uniform
    nodes in the angle. Test functions are ``eta(|T_i(x)|) P(x)`` where
    ``eta`` equals 1 near the boundary and vanishes smoothly at ``rho2``, and
    ``P`` ranges over the monomials of degree at most 2.
    """

    def __init__(self, maps: Sequence, curves: Sequence, rho2: float = 1.5, nr: int = 12,
                 ntheta: int = 128):
        if nr < 4 or ntheta < 16:
            raise ResolutionError("grid too coarse for the tangency quadrature", field="nr")
        self.bands = []
        for i, (m, cv) in enumerate(zip(maps, curves)):
            r2 = rho2
            for _ in range(6):
                band = self._band(m, r2, nr, ntheta)
                pts = band[0]
                clash = any(np.any(c.contains(pts)) for j, c in enumerate(curves) if j != i)
                if not clash:
                    break
                r2 = 1.0 + 0.5 * (r2 - 1.0)
            else:
                raise DomainError(f"tangency band around obstacle {i + 1} meets another obstacle",
                                  field="rho2")
            self.bands.append(band)
        self.points = np.vstack([b[0] for b in self.bands])

    @staticmethod
    def _band(m, rho2, nr, ntheta):
        rho_a = 1.0 + 0.4 * (rho2 - 1.0)
        g, w = np.polynomial.legendre.leggauss(nr)
        rs, ws = [], []
        for a, b in ((1.0, rho_a), (rho_a, rho2)):
            rs.append(a + 0.5 * (b - a) * (g + 1.0))
            ws.append(0.5 * (b - a) * w)
        rho = np.concatenate(rs)
        wr = np.concatenate(ws)
        th = 2 * np.pi * np.arange(ntheta) / ntheta
        W = (rho[:, None] * np.exp(1j * th)[None, :]).ravel()
        wts = (wr[:, None] * rho[:, None] * np.full((1, ntheta), 2 * np.pi / ntheta)).ravel()
        z = map_inverse(m, W)
        t, dt = m.evaluate(z), m.derivative(z)
        wts = wts / np.abs(dt) ** 2
        rr = np.abs(t)
        s = (rr - rho_a) / (rho2 - rho_a)
        eta = 1.0 - _smoothstep(s)
        deta = np.where((s > 0) & (s < 1), -6.0 * s * (1.0 - s), 0.0) / (rho2 - rho_a)
        g_rho = rr * dt / t  # d rho/dx - i d rho/dy
        grad_rho = np.column_stack([g_rho.real, -g_rho.imag])
        c = complex(m.center)
        scale = np.abs(m.boundary - c).max() if getattr(m, "boundary", None) is not None else 1.0
        x = (z.real - c.real) / scale
        y = (z.imag - c.imag) / scale
        polys = [
            (np.ones_like(x), np.zeros_like(x), np.zeros_like(x)),
            (x, np.ones_like(x), np.zeros_like(x)),
            (y, np.zeros_like(x), np.ones_like(x)),
            (x * x, 2 * x, np.zeros_like(x)),
            (x * y, y, x),
            (y * y, np.zeros_like(x), 2 * y),
        ]
        grads = []
        for P, Px, Py in polys:
            gx = deta * grad_rho[:, 0] * P + eta * Px / scale
            gy = deta * grad_rho[:, 1] * P + eta * Py / scale
            grads.append(np.column_stack([gx, gy]))
        return np.column_stack([z.real, z.imag]), wts, np.array(grads)

    def residual(self, u_fn: Callable) -> float:
        """Largest normalised ``|int u . grad h|`` over bands and test functions."""
        worst = 0.0
        for pts, wts, grads in self.bands:
            u = u_fn(pts)
            unorm = np.sqrt(np.sum(wts * np.sum(u * u, axis=1)))
            if unorm == 0:
                continue
            for gr in grads:
                gnorm = np.sqrt(np.sum(wts * np.sum(gr * gr, axis=1)))
                val = abs(np.sum(wts * np.sum(u * gr, axis=1)))
                worst = max(worst, val / (unorm * gnorm))
        return float(worst)


def tangency_residual(u_fn: Callable, maps: Sequence, curves: Sequence, **kw) -> float:
    """Normalised weak tangency residual of a velocity field."""
    return TangencyQuadrature(maps, curves, **kw).residual(u_fn)


@dataclass(frozen=True)
class BumpTestField:
    """Divergence-free test field ``phi = a(t) grad_perp b(x)``.

    ``b`` is the smooth compactly supported bump ``exp(-1/(1 - |x - c|^2/R^2))``
    and ``a(t) = cos^2(pi t / (2 t_end))``, which vanishes to second order at
    ``t_end``.
    """

    center: tuple
    radius: float
    t_end: float

    def a(self, t):
        return np.cos(0.5 * np.pi * t / self.t_end) ** 2

    def da(self, t):
        return -0.5 * np.pi / self.t_end * np.sin(np.pi * t / self.t_end)

    def derivatives(self, x):
        """``b_x, b_y, b_xx, b_xy, b_yy`` at points ``x``."""
        dx = x[:, 0] - self.center[0]
        dy = x[:, 1] - self.center[1]
        R2 = self.radius ** 2
        s = (dx * dx + dy * dy) / R2
        inside = s < 1
        om = np.where(inside, 1.0 - s, 1.0)
        gs = np.where(inside, np.exp(-1.0 / om), 0.0)
        g1 = -gs / om ** 2
        g2 = gs * (1.0 / om ** 4 - 2.0 / om ** 3)
        bx = g1 * 2 * dx / R2
        by = g1 * 2 * dy / R2
        bxx = g2 * 4 * dx * dx / R2 ** 2 + g1 * 2 / R2
        bxy = g2 * 4 * dx * dy / R2 ** 2
        byy = g2 * 4 * dy * dy / R2 ** 2 + g1 * 2 / R2
        return bx, by, bxx, bxy, byy


def momentum_residual(traj, phi: BumpTestField, h: float = 0.02) -> float:
    """Weak momentum residual of a recorded trajectory.

    ``int_0^T int (u . d_t phi + (u x u) : grad phi) dx dt + int u(0) . phi(0)
    - int u(T) . phi(T)``, with the trapezoid rule over the recorded snapshot
    times and the midpoint rule on cells of side ``h``.
    """
    snaps = traj.snapshots
    times = np.array([s.time for s in snaps])
    if len(snaps) < 2:
        raise ValidationError("trajectory needs at least two snapshots", field="snapshots")
    c = np.asarray(phi.center, float)
    R = phi.radius
    n = int(np.ceil(R / h))
    g = (np.arange(-n, n) + 0.5) * h
    X, Y = np.meshgrid(c[0] + g, c[1] + g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) < R]
    if len(pts) < 16:
        raise ResolutionError("grid too coarse for the test field support", field="h")
    for cv in traj.flow.curves:
        if cv.polygon.distance(Point(c)) <= R:
            raise DomainError("test field support meets an obstacle", field="phi")
    bx, by, bxx, bxy, byy = phi.derivatives(pts)
    area = h * h
    integrand = np.zeros(len(snaps))
    u0 = uT = None
    for k, s in enumerate(snaps):
        u = traj.velocity_at(s, pts)
        a, da = phi.a(s.time), phi.da(s.time)
        # phi = a (-b_y, b_x)
        dt_term = da * (-u[:, 0] * by + u[:, 1] * bx)
        conv = a * (-u[:, 0] * u[:, 0] * bxy - u[:, 0] * u[:, 1] * byy
                    + u[:, 1] * u[:, 0] * bxx + u[:, 1] * u[:, 1] * bxy)
        integrand[k] = np.sum(dt_term + conv) * area
        if k == 0:
            u0 = np.sum(phi.a(s.time) * (-u[:, 0] * by + u[:, 1] * bx)) * area
        if k == len(snaps) - 1:
            uT = np.sum(phi.a(s.time) * (-u[:, 0] * by + u[:, 1] * bx)) * area
    space_time = np.trapezoid(integrand, times)
    return float(abs(space_time + u0 - uT))


def _curve_width(curves) -> float:
    widths = []
    for cv in curves:
        poly = cv.polygon
        p = polylabel(poly, tolerance=1e-4)
        widths.append(2.0 * poly.exterior.distance(p))
    return min(widths)


def poincare_estimate(curves, rho: float = 2.0, h: float = 0.02) -> float:
    """Discrete Poincare constant on ``B(0, rho)`` minus the curves' interiors.

    Functions vanish on grid nodes inside any curve and are free on the
    outer circle. ``C = 1 / sqrt(lambda_min)`` for
    ``sum_edges (v_i - v_j)^2 = lambda h^2 sum v_i^2``.
    """
    if isinstance(curves, JordanCurve):
        curves = [curves]
    if not h > 0:
        raise ValidationError("grid spacing must be positive", field="h")
    width = _curve_width(curves)
    if h > width / 2:
        raise ResolutionError(f"grid too coarse: h={h:g} exceeds half the obstacle width {width:g}",
                              field="h")
    m = int(np.ceil(rho / h)) + 1
    xs = h * np.arange(-m, m + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inball = np.hypot(pts[:, 0], pts[:, 1]) < rho
    dirichlet = np.zeros(len(pts), bool)
    for cv in curves:
        dirichlet |= cv.contains(pts)
    if not (dirichlet & inball).any():
        raise ResolutionError("grid too coarse: no nodes inside the obstacle", field="h")
    active = inball & ~dirichlet
    idx = -np.ones(len(pts), int)
    idx[active] = np.arange(active.sum())
    gi = np.arange(len(pts)).reshape(X.shape)
    na = active.sum()
    diag = np.zeros(na)
    rows, cols = [], []
    for a, b in ((gi[1:, :], gi[:-1, :]), (gi[:, 1:], gi[:, :-1])):
        a = a.ravel()
        b = b.ravel()
        edge = inball[a] & inball[b]
        for p, q in ((a[edge], b[edge]), (b[edge], a[edge])):
            ap = active[p]
            np.add.at(diag, idx[p[ap]], 1.0)
            both = ap & active[q]
            rows.append(idx[p[both]])
            cols.append(idx[q[both]])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    K = diags(diag) - coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(na, na)).tocsc()
    lam = eigsh(K.tocsc(), k=1, sigma=0, which="LM", return_eigenvectors=False)[0] / (h * h)
    return float(1.0 / np.sqrt(lam))


def record_diagnostics(flow, blobs: VortexBlobs, cutoffs=None, tangency: TangencyQuadrature | None = None,
                       lq_h: float | None = None) -> DiagnosticsRecord:
    """Diagnostics for one blob configuration under ``flow``."""
    l1, signed = blob_masses(blobs)
    lq = {}
    if len(blobs):
        h = blobs.core / 4 if lq_h is None else lq_h
        _, om = deposit_vorticity(blobs, h)
        lq[1.0] = float(np.sum(np.abs(om)) * h * h)
        lq[2] = float(np.sqrt(np.sum(om * om) * h * h))
        lq[np.inf] = float(np.abs(om).max())
    if isinstance(flow, FreePlane) or flow.k == 0:
        return DiagnosticsRecord(blobs.time, l1, signed, lq, np.zeros(0), np.zeros(0), float("nan"))
    dec = flow.decompose(blobs)
    u_fn = lambda p: dec.velocity(p, check=False)
    circ = np.array([weak_circulation(u_fn, blobs, c) for c in cutoffs]) if cutoffs else np.full(flow.k, np.nan)
    tang = tangency.residual(u_fn) if tangency is not None else float("nan")
    return DiagnosticsRecord(blobs.time, l1, signed, lq, circ, dec.alpha.copy(), tang)


def conservation_report(records: Sequence[DiagnosticsRecord]) -> dict:
    """Maximum drift of each conserved quantity over the records.

    Drifts are relative to the initial value, or absolute when the initial
    value is zero up to round-off (below ``1e-12`` times the series scale).
    """
    if not records:
        raise ValidationError("no diagnostics recorded", field="records")

    def drift(series):
        s = np.asarray(series, float)
        d = np.max(np.abs(s - s[0]))
        zero = abs(s[0]) <= 1e-12 * max(1.0, np.abs(s).max())
        return float(d) if zero else float(d / abs(s[0]))

    out = {
        "l1_mass": drift([r.l1_mass for r in records]),
        "signed_mass": drift([r.signed_mass for r in records]),
    }
    for q in records[0].lq:
        key = "linf_norm" if np.isinf(q) else f"l{q:g}_norm"
        out[key] = drift([r.lq[q] for r in records])
    k = len(records[0].circulations)
    for i in range(k):
        out[f"circ_{i + 1}"] = drift([r.circulations[i] for r in records])
    return out
