"""Exterior conformal maps onto the outside of the unit disk.

A fitted map has the closed form

    T(z) = beta (z - c) exp( sum_j p_j Log((z - s_j) / (z - s_{j-1})) )

where ``s_0 .. s_{K-1}`` is an open chain of charge points placed inside the
curve. Each logarithm's branch cut is the segment ``[s_{j-1}, s_j]``, so T is
single-valued and analytic outside the curve, and ``T(z) ~ beta z`` at
infinity. ``log beta`` and the ``p_j`` are fitted by least squares so that
``log|T| = 0`` on the curve. Derivatives follow from the logarithmic
derivative, so only the inverse needs an iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from numpy.typing import NDArray
from shapely.geometry import LineString, Polygon
from shapely.ops import polylabel

from .errors import DomainError, InversionError, MapFitError, ValidationError
from .geometry import JordanCurve, spectral_derivative

ComplexArray = NDArray[np.complex128]

_CHUNK = 4096


def _to_complex(x) -> ComplexArray:
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return a.astype(complex)
    a = a.astype(float)
    if a.ndim >= 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


@dataclass(frozen=True)
class ExteriorMap:
    """Fitted exterior map of one curve.

    Attributes
    ----------
    beta : float
        Leading coefficient, ``T(z) ~ beta z``; equals 1 / (logarithmic capacity).
    center : complex
        Interior point ``c``.
    charges : ndarray of complex, shape (K,)
        Charge chain ``s_0 .. s_{K-1}``.
    strengths : ndarray, shape (K-1,)
        Chain strengths ``p_1 .. p_{K-1}``.
    residual : float
        Max of ``| |T| - 1 |`` over collocation points and the midpoints between them.
    boundary : ndarray of complex
        Curve samples used for the fit.
    """

    beta: float
    center: complex
    charges: ComplexArray
    strengths: NDArray[np.float64]
    residual: float = 0.0
    boundary: ComplexArray = field(default=None, repr=False)
    owner: int = 1
    n: int | None = None

    @property
    def degree(self) -> int:
        return len(self.charges)

    @property
    def pole_weights(self) -> NDArray[np.float64]:
        # coefficient of 1/(z - s_k) in T'/T
        p = self.strengths
        q = np.zeros(len(self.charges))
        q[1:] += p
        q[:-1] -= p
        return q

    def _chunks(self, z):
        z = np.asarray(z, complex)
        flat = z.ravel()
        for i in range(0, len(flat), _CHUNK):
            yield i, flat[i:i + _CHUNK]

    def log_value(self, z) -> ComplexArray:
        """log T(z) on the branch continuous outside the curve, up to 2 pi i multiples."""
        z = np.asarray(z, complex)
        out = np.empty(z.size, complex)
        s = self.charges
        for i, zz in self._chunks(z):
            ratio = (zz[:, None] - s[None, 1:]) / (zz[:, None] - s[None, :-1])
            out[i:i + len(zz)] = np.log(self.beta) + np.log(zz - self.center) + np.log(ratio) @ self.strengths
        return out.reshape(z.shape)

    def evaluate(self, z) -> ComplexArray:
        return np.exp(self.log_value(z))

    __call__ = evaluate

    def log_derivative(self, z, second=False):
        """``D = T'/T`` and, if ``second``, also ``D'``."""
        z = np.asarray(z, complex)
        d = np.empty(z.size, complex)
        dd = np.empty(z.size, complex) if second else None
        q = self.pole_weights
        for i, zz in self._chunks(z):
            inv = 1.0 / (zz[:, None] - self.charges[None, :])
            w = 1.0 / (zz - self.center)
            d[i:i + len(zz)] = w + inv @ q
            if second:
                dd[i:i + len(zz)] = -w * w - (inv * inv) @ q
        if second:
            return d.reshape(z.shape), dd.reshape(z.shape)
        return d.reshape(z.shape)

    def derivative(self, z) -> ComplexArray:
        return self.evaluate(z) * self.log_derivative(z)

    def jet(self, z):
        """T, T' and T'' at ``z`` in one pass."""
        t = self.evaluate(z)
        d, dd = self.log_derivative(z, second=True)
        return t, t * d, t * (d * d + dd)

    def second_derivative(self, z) -> ComplexArray:
        return self.jet(z)[2]

    def contains(self, z) -> NDArray[np.bool_]:
        """True for points inside the fitted curve."""
        z = np.asarray(z, complex).ravel()
        poly = Polygon(np.column_stack([self.boundary.real, self.boundary.imag]))
        shapely.prepare(poly)
        return shapely.contains_xy(poly, z.real, z.imag)

    def inverse(self, w, tol=1e-12, maxiter=50):
        return map_inverse(self, w, tol=tol, maxiter=maxiter)

    def laurent_coefficients(self, nterms: int = 16) -> ComplexArray:
        """Coefficients ``a_k`` with ``T(z) = beta (z - c) + sum_k a_k (z - c)^(-k)``, k >= 0."""
        s = self.charges - self.center
        p = self.strengths
        m = np.arange(1, nterms + 2)
        # log T = log beta + log w + sum_m g_m w^-m,  w = z - c
        powers = s[None, :] ** m[:, None]
        g = -(powers[:, 1:] - powers[:, :-1]) @ p / m
        b = np.zeros(nterms + 2, complex)
        b[0] = 1.0
        for k in range(1, nterms + 2):
            b[k] = np.sum(m[:k] * g[:k] * b[k - 1::-1][:k]) / k
        return self.beta * b[1:]

    def to_dict(self, nterms: int = 16) -> dict:
        coeffs = self.laurent_coefficients(nterms)
        return {
            "beta": float(self.beta),
            "center": [float(self.center.real), float(self.center.imag)],
            "coeffs": [[float(c.real), float(c.imag)] for c in coeffs],
            "residual": float(self.residual),
            "charges": [[float(c.real), float(c.imag)] for c in self.charges],
            "strengths": [float(v) for v in self.strengths],
            "boundary": [[float(c.real), float(c.imag)] for c in self.boundary],
            "owner": int(self.owner),
            "n": self.n,
        }

    def to_json(self, nterms: int = 16) -> str:
        return json.dumps(self.to_dict(nterms), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExteriorMap":
        def cplx(v):
            a = np.asarray(v, float)
            return a[:, 0] + 1j * a[:, 1]

        return cls(float(d["beta"]), complex(*d["center"]), cplx(d["charges"]),
                   np.asarray(d["strengths"], float), float(d["residual"]), cplx(d["boundary"]),
                   int(d.get("owner", 1)), d.get("n"))


@dataclass(frozen=True)
class DiskMap:
    """Exact map ``(z - c) / r`` for a disk."""

    center: complex
    radius: float

    @property
    def beta(self):
        return 1.0 / self.radius

    def evaluate(self, z):
        return (np.asarray(z, complex) - self.center) / self.radius

    __call__ = evaluate

    def derivative(self, z):
        return np.full(np.shape(z), 1.0 / self.radius, complex)

    def second_derivative(self, z):
        return np.zeros(np.shape(z), complex)

    def jet(self, z):
        return self.evaluate(z), self.derivative(z), self.second_derivative(z)

    def inverse(self, w, **kw):
        return self.center + self.radius * np.asarray(w, complex)


@dataclass(frozen=True)
class EllipseMap:
    """Exact Joukowski-type map for an ellipse with semi-axes ``a >= b >= 0``.

    ``b = 0`` gives the segment ``[c - a, c + a]`` rotated by ``angle``.
    """

    a: float
    b: float
    center: complex = 0j
    angle: float = 0.0

    def __post_init__(self):
        if self.a < self.b or self.b < 0:
            raise ValidationError("need a >= b >= 0", field="b")

    @property
    def beta(self):
        return 2.0 / (self.a + self.b)

    def _zeta(self, z):
        return (np.asarray(z, complex) - self.center) * np.exp(-1j * self.angle)

    def _root(self, zeta):
        f = np.sqrt(self.a ** 2 - self.b ** 2)
        return np.sqrt(zeta - f) * np.sqrt(zeta + f)

    def evaluate(self, z):
        zeta = self._zeta(z)
        return (zeta + self._root(zeta)) / (self.a + self.b)

    __call__ = evaluate

    def derivative(self, z):
        zeta = self._zeta(z)
        return (1.0 + zeta / self._root(zeta)) / (self.a + self.b) * np.exp(-1j * self.angle)

    def second_derivative(self, z):
        zeta = self._zeta(z)
        f2 = self.a ** 2 - self.b ** 2
        return -f2 / self._root(zeta) ** 3 / (self.a + self.b) * np.exp(-2j * self.angle)

    def jet(self, z):
        return self.evaluate(z), self.derivative(z), self.second_derivative(z)

    def inverse(self, w, **kw):
        w = np.asarray(w, complex)
        zeta = 0.5 * (self.a + self.b) * w + 0.5 * (self.a - self.b) / w
        return self.center + zeta * np.exp(1j * self.angle)


def _ray_thickness(anchor, direction, z) -> NDArray[np.float64]:
    """Distance along each inward ray to the first crossing of the polygon ``z``."""
    p = z[None, :]
    e = (np.roll(z, -1) - z)[None, :]
    d = direction[:, None]
    w = p - anchor[:, None]

    def cross(a, b):
        return (np.conj(a) * b).imag

    den = cross(d, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(w, e) / den
        u = cross(w, d) / den
    ok = (np.abs(den) > 1e-300) & (t > 1e-9) & (u >= 0) & (u <= 1)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def place_charges(z: ComplexArray, count: int, depth: float = 3.0) -> ComplexArray:
    """Charge chain inside a ccw curve sampled uniformly in its parameter.

    Each charge sits on the inward normal at one of ``count`` evenly spaced
    anchor samples. Its depth is ``depth`` times the local charge spacing,
    capped at 0.45 of the inward thickness and, where the curve is convex,
    at 0.8 of the radius of curvature.
    """
    m = len(z)
    dz = spectral_derivative(z)
    d2z = spectral_derivative(dz)
    speed = np.abs(dz)
    nin = 1j * dz / speed
    kappa = np.imag(np.conj(dz) * d2z) / speed ** 3
    idx = np.round(np.linspace(0, m, count, endpoint=False)).astype(int) % m
    spacing = speed[idx] * 2 * np.pi / count
    thick = _ray_thickness(z[idx], nin[idx], z)
    dep = np.minimum(depth * spacing, 0.45 * thick)
    kap = kappa[idx]
    dep = np.where(kap > 0, np.minimum(dep, 0.8 / np.maximum(kap, 1e-300)), dep)
    return z[idx] + dep * nin[idx]


def _interior_point(curve: JordanCurve) -> complex:
    poly = curve.polygon
    c = poly.centroid
    if poly.contains(c) and poly.exterior.distance(c) > 0.1 * np.sqrt(poly.area / np.pi):
        return complex(c.x, c.y)
    p = polylabel(poly, tolerance=1e-3 * np.sqrt(poly.area))
    return complex(p.x, p.y)


def fit_exterior_map(curve: JordanCurve, degree: int = 64, collocation: int | None = None,
                     depth: float = 3.0, cond_limit: float = 1e16) -> ExteriorMap:
    """Least-squares fit of the exterior map of ``curve`` with ``degree`` charges.

    Parameters
    ----------
    curve : JordanCurve
        Simple closed curve, either orientation.
    degree : int
        Number of charge points.
    collocation : int, optional
        Number of boundary collocation points; default ``max(4 degree, len(curve))``.
        Must be at least ``2 degree + 2``.
    depth : float
        Charge depth in units of the local charge spacing.

    Raises
    ------
    MapFitError
        If the curve is not simple, there are too few collocation points or
        the least-squares matrix is numerically singular.
    """
    if degree < 2:
        raise ValidationError("degree must be at least 2", field="degree")
    mcol = collocation if collocation is not None else max(4 * degree, len(curve.points))
    if mcol < 2 * degree + 2:
        raise MapFitError(f"collocation count {mcol} below 2*degree+2", field="collocation")
    if not curve.is_simple:
        raise MapFitError("curve is not simple", field="curve")
    if curve.signed_area < 0:
        curve = JordanCurve(curve.points[::-1], curve.owner, curve.n)
    fine = curve.resample(2 * mcol)
    zf = fine.z
    z = zf[::2]
    mid = zf[1::2]
    c = _interior_point(curve)
    poly = curve.polygon

    dep = depth
    for _ in range(8):
        s = place_charges(z, degree, dep)
        chain = LineString(np.column_stack([s.real, s.imag]))
        if poly.contains(chain) and chain.distance(poly.exterior) > 0:
            break
        dep *= 0.7
    else:
        raise MapFitError("could not place charges inside the curve", field="curve")

    def design(pts):
        cols = [np.ones(len(pts))]
        cols += list(np.log(np.abs((pts[:, None] - s[None, 1:]) / (pts[:, None] - s[None, :-1]))).T)
        return np.array(cols).T

    A = design(z)
    rhs = -np.log(np.abs(z - c))
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    sol, _, rank, sv = np.linalg.lstsq(A / scale, rhs, rcond=None)
    sol = sol / scale
    if not np.all(np.isfinite(sol)):
        raise MapFitError("map fit produced non-finite coefficients", field="curve")
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond > cond_limit:
        raise MapFitError(f"map fit is ill-conditioned (condition {cond:.2e})", field="degree")
    res = max(np.abs(A @ sol - rhs).max(), np.abs(design(mid) @ sol + np.log(np.abs(mid - c))).max())
    # | |T| - 1 | = |exp(log|T|) - 1|
    res = float(np.expm1(res))
    return ExteriorMap(float(np.exp(sol[0])), c, s, sol[1:], res, z, curve.owner, curve.n)


def fit_to_tolerance(curve: JordanCurve, tol: float = 1e-8, degree: int = 64, max_degree: int = 512,
                     depths: Sequence[float] = (2.0, 3.0, 4.0), strict: bool = False) -> ExteriorMap:
    """Fit with increasing degree until the boundary residual is below ``tol``.

    The degree doubles from ``degree`` up to ``max_degree``. At each degree
    several charge depths are tried and the best fit kept. If the tolerance
    is never met the best map is returned, or :class:`MapFitError` is raised
    when ``strict`` is set.
    """
    best = None
    deg = degree
    while deg <= max_degree:
        for dep in depths:
            try:
                m = fit_exterior_map(curve, deg, depth=dep)
            except MapFitError:
                continue
            if best is None or m.residual < best.residual:
                best = m
        if best is not None and best.residual <= tol:
            return best
        deg *= 2
    if best is None or strict:
        raise MapFitError(f"map residual {getattr(best, 'residual', np.inf):.2e} above tolerance {tol:.1e}",
                          field="degree")
    return best


def map_evaluate(tmap, x) -> ComplexArray:
    """T at points ``x`` (complex or (..., 2) real)."""
    return tmap.evaluate(_to_complex(x))


def map_derivative(tmap, x) -> ComplexArray:
    return tmap.derivative(_to_complex(x))


def _inverse_guess(tmap, w) -> ComplexArray:
    """Starting points for Newton: the far-field guess or a boundary-based one.

    Near a thin boundary ``c + w / beta`` can fall inside the curve, so each
    point also tries one tangent step from the boundary sample whose image
    angle is closest, and keeps whichever guess has the smaller residual.
    """
    z = tmap.center + w / tmap.beta
    b = getattr(tmap, "boundary", None)
    if b is None:
        return z
    tb = tmap.evaluate(b)
    db = tmap.derivative(b)
    k = np.argmin(np.abs(np.angle(w[:, None] / tb[None, :])), axis=1)
    zb = b[k] + (w - tb[k]) / db[k]
    res_far = np.abs(tmap.evaluate(z) - w)
    inside = tmap.contains(z)
    with np.errstate(all="ignore"):
        res_b = np.abs(tmap.evaluate(zb) - w)
    ok_b = np.isfinite(res_b) & ~tmap.contains(zb)
    use = ok_b & (inside | (res_b < res_far))
    return np.where(use, zb, z)


def map_inverse(tmap, w, tol: float = 1e-12, maxiter: int = 50) -> ComplexArray:
    """Solve ``T(z) = w`` for ``|w| > 1`` by damped Newton iteration.

    Starts from ``c + w / beta`` and halves the step until the residual
    drops. Raises :class:`InversionError` with the last iterate if some point
    has not converged after ``maxiter`` iterations.
    """
    w = _to_complex(w)
    shape = w.shape
    w = np.atleast_1d(w).ravel()
    if np.any(np.abs(w) <= 1.0):
        raise DomainError("inverse requires |w| > 1", field="w")
    if isinstance(tmap, (DiskMap, EllipseMap)):
        return tmap.inverse(w).reshape(shape)
    z = _inverse_guess(tmap, w)
    f = tmap.evaluate(z) - w
    scale = np.maximum(1.0, np.abs(w))
    for _ in range(maxiter):
        err = np.abs(f)
        active = err > tol * scale
        if not active.any():
            break
        za = z[active]
        step = f[active] / tmap.derivative(za)
        lam = np.ones(len(za))
        todo = np.ones(len(za), bool)
        znew = za.copy()
        fnew = f[active].copy()
        for _ in range(30):
            cand = za[todo] - lam[todo] * step[todo]
            fc = tmap.evaluate(cand) - w[active][todo]
            good = np.abs(fc) < err[active][todo]
            ids = np.flatnonzero(todo)
            znew[ids[good]] = cand[good]
            fnew[ids[good]] = fc[good]
            todo[ids[good]] = False
            lam[todo] *= 0.5
            if not todo.any():
                break
        z[active] = znew
        f[active] = fnew
    bad = np.abs(f) > tol * scale
    if bad.any():
        raise InversionError(f"inverse map did not converge at {bad.sum()} point(s)",
                             last_iterate=z.reshape(shape), field="w")
    if tmap.boundary is not None and np.any(tmap.contains(z)):
        raise InversionError("inverse map converged to a point inside the curve",
                             last_iterate=z.reshape(shape), field="w")
    return z.reshape(shape)


def inversion(x):
    """Point inversion ``x / |x|^2`` (complex or real pairs)."""
    z = _to_complex(x)
    if np.any(np.abs(z) == 0):
        raise DomainError("inversion is undefined at the origin", field="x")
    out = z / np.abs(z) ** 2
    if np.iscomplexobj(np.asarray(x)) or np.ndim(x) == 0:
        return out
    return np.stack([out.real, out.imag], axis=-1)


def caratheodory_check(maps: Sequence, reference, points) -> list:
    """Sup deviation of each map and its derivative from ``reference`` on ``points``.

    Returns a list of dicts with ``n``, ``dev`` and ``dev_derivative``.
    Raises :class:`DomainError` if the point set meets any map's curve interior.
    """
    z = np.atleast_1d(_to_complex(points)).ravel()
    tref = reference.evaluate(z)
    dref = reference.derivative(z)
    out = []
    for m in maps:
        if getattr(m, "boundary", None) is not None and np.any(m.contains(z)):
            raise DomainError(f"comparison set is not exterior to the curve at n={m.n}", field="n")
        out.append({
            "n": m.n,
            "dev": float(np.abs(m.evaluate(z) - tref).max()),
            "dev_derivative": float(np.abs(m.derivative(z) - dref).max()),
        })
    return out
