"""Obstacles, smooth approximating curves, cutoffs and set-size estimates.

A :class:`SingularObstacle` is the (possibly non-smooth, possibly
zero-area) compact set the fluid flows around. Each obstacle is approximated
by a nested family of smooth Jordan curves (:func:`approximation_sequence`)
sitting at distance ``1/n`` outside it. The remaining helpers measure those
sets: Hausdorff distance between point clouds, a discrete H1 capacity and
smooth cutoff functions around each obstacle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import shapely
from numpy.typing import NDArray
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing, LineString, Point, Polygon

from .errors import DomainError, GeometryError, ResolutionError, ValidationError

FloatArray = NDArray[np.float64]

OBSTACLE_KINDS = ("disk", "ellipse", "segment", "polyline", "koch", "pointcloud")

# sample density used to represent obstacles as point clouds
_SAMPLE_SPACING = 0.005


def _as_points(points, name="points") -> FloatArray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"{name} must be an array of (x, y) pairs", field=name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values", field=name)
    return arr


def _densify_polyline(pts: FloatArray, spacing: float, closed=False) -> FloatArray:
    if closed:
        pts = np.vstack([pts, pts[:1]])
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(np.ceil(np.hypot(*(b - a)) / spacing)))
        t = np.arange(1, m + 1)[:, None] / m
        out.append(a + t * (b - a))
    res = np.vstack(out)
    return res[:-1] if closed else res


def koch_snowflake(level: int, center=(0.0, 0.0), radius: float = 1.0) -> FloatArray:
    """Vertices of a counter-clockwise Koch snowflake.

    Parameters
    ----------
    level : int
        Number of subdivision rounds (0 gives the triangle).
    center, radius
        Circumscribed circle of the initial triangle.
    """
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    z = complex(*center) + radius * np.exp(1j * ang)
    rot = np.exp(-1j * np.pi / 3)  # bumps point outward for a ccw polygon
    for _ in range(level):
        p = z
        q = np.roll(z, -1)
        a = p + (q - p) / 3
        b = p + 2 * (q - p) / 3
        peak = a + (b - a) * rot
        z = np.stack([p, a, peak, b], axis=1).ravel()
    return np.column_stack([z.real, z.imag])


@dataclass(frozen=True)
class SingularObstacle:
    """Compact obstacle set, possibly with empty interior.

    Attributes
    ----------
    kind : str
        One of ``disk``, ``ellipse``, ``segment``, ``polyline``, ``koch``,
        ``pointcloud``.
    params : dict
        Shape parameters (``center``/``radius`` for disks, ``points`` for
        polylines and so on).
    samples : ndarray, shape (P, 2)
        Dense point cloud describing the set.
    id : int
        Obstacle label, 1-based.
    """

    kind: str
    params: dict
    samples: FloatArray
    id: int = 1

    def __post_init__(self):
        if self.kind not in OBSTACLE_KINDS:
            raise ValidationError(f"unknown obstacle kind {self.kind!r}", field="kind")
        pts = _as_points(self.samples, "points")
        if len(pts) == 0:
            raise GeometryError("obstacle has no sample points", field="points")
        spread = np.ptp(pts, axis=0).max() if len(pts) > 1 else 0.0
        if spread <= 1e-12:
            raise GeometryError("obstacle reduced to a point", field="points")

    # constructors ---------------------------------------------------------
    @classmethod
    def disk(cls, center=(0.0, 0.0), radius: float = 1.0, id: int = 1):
        if not radius > 0:
            raise GeometryError("obstacle reduced to a point", field="radius")
        m = max(64, int(np.ceil(2 * np.pi * radius / _SAMPLE_SPACING)))
        th = 2 * np.pi * np.arange(m) / m
        pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
        return cls("disk", {"center": tuple(map(float, center)), "radius": float(radius)}, pts, id)

    @classmethod
    def ellipse(cls, center=(0.0, 0.0), a: float = 1.0, b: float = 0.5, angle: float = 0.0, id: int = 1):
        if not (a > 0 and b > 0):
            raise GeometryError("ellipse semi-axes must be positive", field="a" if a <= 0 else "b")
        m = max(64, int(np.ceil(2 * np.pi * max(a, b) / _SAMPLE_SPACING)))
        th = 2 * np.pi * np.arange(m) / m
        z = (a * np.cos(th) + 1j * b * np.sin(th)) * np.exp(1j * angle) + complex(*center)
        prm = {"center": tuple(map(float, center)), "a": float(a), "b": float(b), "angle": float(angle)}
        return cls("ellipse", prm, np.column_stack([z.real, z.imag]), id)

    @classmethod
    def segment(cls, p0=(-1.0, 0.0), p1=(1.0, 0.0), id: int = 1):
        pts = _as_points([p0, p1])
        return cls("segment", {"points": pts.tolist()}, _densify_polyline(pts, _SAMPLE_SPACING), id)

    @classmethod
    def polyline(cls, points, id: int = 1):
        pts = _as_points(points)
        if len(pts) < 2:
            raise GeometryError("obstacle reduced to a point", field="points")
        return cls("polyline", {"points": pts.tolist()}, _densify_polyline(pts, _SAMPLE_SPACING), id)

    @classmethod
    def koch(cls, level: int = 3, center=(0.0, 0.0), radius: float = 1.0, id: int = 1):
        if level < 0:
            raise ValidationError("koch level must be non-negative", field="level")
        verts = koch_snowflake(level, center, radius)
        prm = {"level": int(level), "center": tuple(map(float, center)), "radius": float(radius)}
        return cls("koch", prm, _densify_polyline(verts, _SAMPLE_SPACING, closed=True), id)

    @classmethod
    def pointcloud(cls, points, id: int = 1):
        """Custom obstacle given as an ordered point list, joined as a polyline."""
        pts = _as_points(points)
        return cls("pointcloud", {"points": pts.tolist()}, pts, id)

    @classmethod
    def from_dict(cls, spec: dict, id: int = 1):
        kind = spec.get("kind")
        try:
            if kind == "disk":
                return cls.disk(spec.get("center", (0, 0)), float(spec["radius"]), id)
            if kind == "ellipse":
                return cls.ellipse(spec.get("center", (0, 0)), float(spec["a"]), float(spec["b"]),
                                   float(spec.get("angle", 0.0)), id)
            if kind == "segment":
                p = spec["points"]
                return cls.segment(p[0], p[1], id)
            if kind == "polyline":
                return cls.polyline(spec["points"], id)
            if kind == "koch":
                return cls.koch(int(spec.get("level", 3)), spec.get("center", (0, 0)),
                                float(spec.get("radius", 1.0)), id)
            if kind == "pointcloud":
                return cls.pointcloud(spec["points"], id)
        except KeyError as exc:
            raise ValidationError(f"obstacle field {exc.args[0]!r} is missing", field=exc.args[0]) from None
        raise ValidationError(f"unknown obstacle kind {kind!r}", field="kind")

    # geometry -------------------------------------------------------------
    @cached_property
    def shape(self):
        """Shapely geometry of the set (polygon or line)."""
        if self.kind in ("disk", "ellipse", "koch"):
            return Polygon(self.samples)
        if len(self.samples) == 2:
            return LineString(self.samples)
        return LineString(self.samples)

    @property
    def is_smooth(self) -> bool:
        return self.kind in ("disk", "ellipse")

    @property
    def centroid(self) -> FloatArray:
        return self.samples.mean(axis=0)

    def distance(self, points) -> FloatArray:
        """Euclidean distance from each point to the set (0 inside)."""
        p = np.atleast_2d(np.asarray(points, float))
        if self.kind == "disk":
            c = np.asarray(self.params["center"])
            return np.maximum(np.hypot(p[:, 0] - c[0], p[:, 1] - c[1]) - self.params["radius"], 0.0)
        return shapely.distance(self.shape, shapely.points(p))

    def distance_gradient(self, points) -> FloatArray:
        """Unit gradient of the distance function (zero inside the set)."""
        p = np.atleast_2d(np.asarray(points, float))
        if self.kind == "disk":
            v = p - np.asarray(self.params["center"])
        else:
            lines = shapely.shortest_line(shapely.points(p), self.shape)
            near = shapely.get_coordinates(lines).reshape(-1, 2, 2)
            v = near[:, 0] - near[:, 1]
        r = np.hypot(v[:, 0], v[:, 1])
        out = np.zeros_like(v)
        ok = r > 1e-14
        out[ok] = v[ok] / r[ok, None]
        if self.kind == "disk":
            out[r <= self.params["radius"]] = 0.0
        return out

    def level_rings(self, r: float, spacing: float) -> list:
        """Closed rings of the level set {dist = r} as complex arrays.

        Outer rings run counterclockwise and holes clockwise, so each ring's
        circulation counts towards the enclosed region with its sign.

        Points are evenly spaced along each ring with spacing at most
        ``spacing``. The last point is not repeated.
        """
        if r <= 0:
            raise ValidationError("level must be positive", field="r")
        if self.kind == "disk":
            c = complex(*self.params["center"])
            rad = self.params["radius"] + r
            m = max(16, int(np.ceil(2 * np.pi * rad / spacing)))
            return [c + rad * np.exp(2j * np.pi * np.arange(m) / m)]
        poly = self.shape.buffer(r, quad_segs=64)
        rings = [(np.asarray(poly.exterior.coords)[:-1], True)]
        rings += [(np.asarray(h.coords)[:-1], False) for h in poly.interiors]
        out = []
        for ring, outer in rings:
            if LinearRing(ring).is_ccw != outer:
                ring = ring[::-1]
            length = np.sum(np.hypot(*np.diff(np.vstack([ring, ring[:1]]), axis=0).T))
            m = max(16, int(np.ceil(length / spacing)))
            out.append(_resample_closed(ring[:, 0] + 1j * ring[:, 1], m))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}}


def _resample_closed(z: NDArray[np.complex128], m: int) -> NDArray[np.complex128]:
    """Resample a closed polygon to ``m`` points evenly spaced in arclength."""
    zc = np.append(z, z[0])
    seg = np.abs(np.diff(zc))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], m, endpoint=False)
    return np.interp(t, s, zc.real) + 1j * np.interp(t, s, zc.imag)


def spectral_derivative(z: NDArray) -> NDArray:
    """d z / d theta for samples uniform in theta on [0, 2 pi)."""
    m = len(z)
    k = np.fft.fftfreq(m, 1.0 / m)
    if m % 2 == 0:
        k[m // 2] = 0.0
    return np.fft.ifft(1j * k * np.fft.fft(z))


@dataclass(frozen=True)
class JordanCurve:
    """Smooth simple closed curve sampled at uniform parameter values.

    Attributes
    ----------
    points : ndarray, shape (M, 2)
        Counter-clockwise samples, last point not repeated.
    owner : int
        Id of the obstacle this curve surrounds.
    n : int or None
        Approximation index, ``None`` for an obstacle's own boundary.
    """

    points: FloatArray
    owner: int = 1
    n: int | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) < 8:
            raise GeometryError("curve needs at least 8 samples", field="points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def circle(cls, center=(0.0, 0.0), radius=1.0, samples=256, owner=1, n=None):
        th = 2 * np.pi * np.arange(samples) / samples
        pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
        return cls(pts, owner, n)

    @classmethod
    def ellipse(cls, center=(0.0, 0.0), a=2.0, b=1.0, angle=0.0, samples=256, owner=1, n=None):
        th = 2 * np.pi * np.arange(samples) / samples
        z = (a * np.cos(th) + 1j * b * np.sin(th)) * np.exp(1j * angle) + complex(*center)
        return cls(np.column_stack([z.real, z.imag]), owner, n)

    @cached_property
    def z(self) -> NDArray[np.complex128]:
        return self.points[:, 0] + 1j * self.points[:, 1]

    @cached_property
    def polygon(self) -> Polygon:
        return Polygon(self.points)

    @property
    def signed_area(self) -> float:
        x, y = self.points.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def length(self) -> float:
        return float(np.sum(np.abs(np.diff(np.append(self.z, self.z[0])))))

    @property
    def is_simple(self) -> bool:
        return bool(LinearRing(self.points).is_simple)

    def contains(self, points) -> NDArray[np.bool_]:
        """True for points strictly inside the curve (pairs or complex numbers)."""
        a = np.asarray(points)
        if np.iscomplexobj(a):
            a = np.column_stack([a.real.ravel(), a.imag.ravel()])
        p = np.atleast_2d(np.asarray(a, float))
        poly = self.polygon
        shapely.prepare(poly)
        return shapely.contains_xy(poly, p[:, 0], p[:, 1])

    def resample(self, m: int) -> "JordanCurve":
        """Trigonometric interpolation onto ``m`` uniform parameter values."""
        mm = len(self.z)
        if m == mm:
            return self
        c = np.fft.fft(self.z) / mm
        k = np.fft.fftfreq(mm, 1.0 / mm)
        th = 2 * np.pi * np.arange(m) / m
        keep = np.abs(k) < min(mm, m) / 2
        zz = np.exp(1j * np.outer(th, k[keep])) @ c[keep]
        return JordanCurve(np.column_stack([zz.real, zz.imag]), self.owner, self.n)

    def derivative(self) -> NDArray[np.complex128]:
        return spectral_derivative(self.z)


def _mollify(z: NDArray[np.complex128], sigma: float) -> NDArray[np.complex128]:
    """Gaussian smoothing along an arclength-uniform closed curve."""
    m = len(z)
    length = np.sum(np.abs(np.diff(np.append(z, z[0]))))
    k = np.fft.fftfreq(m, 1.0 / m)
    filt = np.exp(-0.5 * (2 * np.pi * k * sigma / length) ** 2)
    return np.fft.ifft(np.fft.fft(z) * filt)


def approximation_sequence(obstacle: SingularObstacle, n: int, samples: int = 256,
                           smoothing: float = 0.25) -> JordanCurve:
    """Smooth Jordan curve enclosing ``obstacle`` at distance about ``1/n``.

    Disks map to the concentric circle of radius ``r + 1/n``. Every other
    set is offset by ``1/n``, resampled uniformly in arclength and smoothed
    with a Gaussian of width ``smoothing / n`` along the curve, so the family
    is nested and shrinks onto the obstacle as ``n`` grows.
    """
    if int(n) != n or n < 1:
        raise ValidationError("approximation index must be a positive integer", field="n")
    spread = np.ptp(obstacle.samples, axis=0).max()
    if spread <= 1e-12:
        raise GeometryError("obstacle reduced to a point", field="points")
    delta = 1.0 / n
    if obstacle.kind == "disk":
        c = obstacle.params["center"]
        return JordanCurve.circle(c, obstacle.params["radius"] + delta, samples, obstacle.id, n)
    poly = obstacle.shape.buffer(delta, quad_segs=64)
    ring = np.asarray(poly.exterior.coords)[:-1]
    z = ring[:, 0] + 1j * ring[:, 1]
    z = _resample_closed(z, samples)
    if LinearRing(np.column_stack([z.real, z.imag])).is_ccw is False:
        z = z[::-1]
    z = _mollify(z, smoothing * delta)
    curve = JordanCurve(np.column_stack([z.real, z.imag]), obstacle.id, n)
    if not curve.is_simple:
        raise GeometryError(f"approximating curve at n={n} is not simple", field="n")
    if not np.all(curve.contains(obstacle.samples)):
        raise GeometryError(f"approximating curve at n={n} does not enclose the obstacle", field="n")
    return curve


def boundary_curve(obstacle: SingularObstacle, samples: int = 256) -> JordanCurve:
    """The obstacle's own boundary, available for disks and ellipses."""
    p = obstacle.params
    if obstacle.kind == "disk":
        return JordanCurve.circle(p["center"], p["radius"], samples, obstacle.id, None)
    if obstacle.kind == "ellipse":
        return JordanCurve.ellipse(p["center"], p["a"], p["b"], p["angle"], samples, obstacle.id, None)
    raise GeometryError(f"a {obstacle.kind} has no smooth boundary; give an approximation index",
                        field="approximation_index")


@dataclass(frozen=True)
class DomainApproximation:
    """Approximate fluid domain: the exterior of ``k`` disjoint curves."""

    obstacles: tuple
    curves: tuple
    n: int | None = None
    separation: FloatArray = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.curves)

    def contains_fluid(self, points) -> NDArray[np.bool_]:
        p = np.atleast_2d(np.asarray(points, float))
        inside = np.zeros(len(p), bool)
        for c in self.curves:
            inside |= c.contains(p)
        return ~inside


def build_domain(obstacles: Sequence[SingularObstacle], n: int | None, samples: int = 256) -> DomainApproximation:
    """Approximate all obstacles at index ``n`` and check the curves are disjoint.

    ``n=None`` uses each obstacle's own smooth boundary.
    """
    if len(obstacles) == 0:
        raise ValidationError("at least one obstacle is required", field="obstacles")
    curves = []
    for ob in obstacles:
        curves.append(boundary_curve(ob, samples) if n is None else approximation_sequence(ob, n, samples))
    k = len(curves)
    sep = np.full((k, k), np.inf)
    for i in range(k):
        for j in range(i + 1, k):
            d = curves[i].polygon.distance(curves[j].polygon)
            sep[i, j] = sep[j, i] = d
            if d <= 0:
                raise DomainError(f"approximating curves of obstacles {i + 1} and {j + 1} overlap", field="obstacles")
    return DomainApproximation(tuple(obstacles), tuple(curves), n, sep)


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    pa = _as_points(a, "a")
    pb = _as_points(b, "b")
    if len(pa) == 0 or len(pb) == 0:
        raise ValidationError("point sets must be non-empty", field="a" if len(pa) == 0 else "b")
    dab, _ = cKDTree(pb).query(pa)
    dba, _ = cKDTree(pa).query(pb)
    return float(max(dab.max(), dba.max()))


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class Cutoff:
    """Smooth cutoff equal to 1 within ``eps`` of an obstacle, 0 beyond ``2 eps``.

    Between the two levels it is ``1 - s(t)`` with ``t = (d - eps)/eps`` and
    the cubic smoothstep ``s``, where ``d`` is the distance to the obstacle.
    """

    obstacle: SingularObstacle
    eps: float

    def __call__(self, points) -> FloatArray:
        d = self.obstacle.distance(points)
        return 1.0 - _smoothstep((d - self.eps) / self.eps)

    def gradient(self, points) -> FloatArray:
        p = np.atleast_2d(np.asarray(points, float))
        d = self.obstacle.distance(p)
        t = (d - self.eps) / self.eps
        ds = np.where((t > 0) & (t < 1), 6.0 * t * (1.0 - t), 0.0) / self.eps
        return -ds[:, None] * self.obstacle.distance_gradient(p)

    def radial_weight(self, r) -> FloatArray:
        """-d chi / d r as a function of the distance ``r``."""
        t = (np.asarray(r, float) - self.eps) / self.eps
        return np.where((t > 0) & (t < 1), 6.0 * t * (1.0 - t), 0.0) / self.eps

    def blob_average(self, positions, core: float) -> FloatArray:
        """Mean of the cutoff over the uniform disk of radius ``core`` around each position."""
        p = np.atleast_2d(np.asarray(positions, float))
        g, w = np.polynomial.legendre.leggauss(3)
        s = 0.5 * (g + 1.0)  # nodes in r^2 / core^2
        na = 8
        th = 2 * np.pi * (np.arange(na) + 0.5) / na
        offs = (core * np.sqrt(s)[:, None] * np.exp(1j * th)[None, :]).ravel()
        wts = np.repeat(0.5 * w, na) / na
        q = p[:, None, :] + np.stack([offs.real, offs.imag], axis=-1)[None]
        vals = self(q.reshape(-1, 2)).reshape(len(p), -1)
        return vals @ wts


def make_cutoffs(domain: DomainApproximation, eps: float) -> list:
    """One cutoff per obstacle, checking the supports stay apart."""
    if not eps > 0:
        raise ValidationError("cutoff width must be positive", field="cutoff_eps")
    obs = domain.obstacles
    for i in range(len(obs)):
        for j in range(i + 1, len(obs)):
            sep = obs[i].shape.distance(obs[j].shape)
            if 2 * eps >= sep:
                raise DomainError(f"cutoffs overlap: 2*eps={2 * eps:g} >= separation {sep:g} "
                                  f"of obstacles {i + 1} and {j + 1}", field="cutoff_eps")
    for ob, cv in zip(obs, domain.curves):
        if cv.n is None:
            continue
        reach = ob.distance(cv.points).max()
        if reach >= eps:
            raise DomainError(f"cutoff width {eps:g} does not cover the approximating curve "
                              f"of obstacle {ob.id} (reach {reach:g})", field="cutoff_eps")
    return [Cutoff(ob, float(eps)) for ob in obs]


def _grid_nodes(R: float, h: float):
    m = int(np.ceil(R / h)) + 1
    xs = h * np.arange(-m, m + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return X, Y


def capacity_estimate(obstacle, R: float = 1.0, h: float = 0.02, tol: float = 1e-10) -> float:
    """Discrete H1 capacity of a set relative to the ball ``B(0, R)``.

    Minimises ``sum_edges (v_i - v_j)^2 + h^2 sum v_i^2`` over nodal values on
    a square grid of spacing ``h``, with ``v = 1`` on nodes within ``2h`` of
    the set and ``v = 0`` on nodes outside the ball. The sum approximates
    ``int |grad v|^2 + v^2``.

    Parameters
    ----------
    obstacle : SingularObstacle or array of points
        The set whose capacity is estimated.
    R : float
        Radius of the containing ball centred at the origin.
    h : float
        Grid spacing.
    """
    if not h > 0 or h >= R / 4:
        raise ResolutionError("grid too coarse for the containing ball", field="h")
    X, Y = _grid_nodes(R, h)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    if isinstance(obstacle, SingularObstacle):
        dist = obstacle.distance(nodes)
        far = np.hypot(*obstacle.samples.T).max()
    else:
        pts = _as_points(obstacle)
        dist, _ = cKDTree(pts).query(nodes)
        far = np.hypot(*pts.T).max()
    if far >= R - 2 * h:
        raise DomainError("set does not fit inside the ball", field="R")
    inball = (np.hypot(X, Y) < R).ravel()
    one = inball & (dist <= 2 * h)
    if not one.any():
        raise ResolutionError("grid too coarse to see the set", field="h")
    free = inball & ~one
    shape = X.shape
    idx = -np.ones(X.size, int)
    idx[free] = np.arange(free.sum())
    grid_idx = np.arange(X.size).reshape(shape)
    rows, cols = [], []
    rhs = np.zeros(free.sum())
    for a, b in ((grid_idx[1:, :], grid_idx[:-1, :]), (grid_idx[:, 1:], grid_idx[:, :-1])):
        a = a.ravel()
        b = b.ravel()
        for p, q in ((a, b), (b, a)):
            fp = free[p]
            sel = fp & free[q]
            rows.append(idx[p[sel]])
            cols.append(idx[q[sel]])
            s1 = fp & one[q]
            np.add.at(rhs, idx[p[s1]], 1.0)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    nf = free.sum()
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nf, nf)).tocsr()
    A = diags(np.full(nf, 4.0 + h * h)) - adj
    v, info = cg(A, rhs, rtol=tol, maxiter=20000, M=diags(np.full(nf, 1.0 / (4.0 + h * h))))
    if info != 0:
        raise ResolutionError("capacity solve did not converge", field="h")
    full = np.zeros(X.size)
    full[one] = 1.0
    full[free] = v
    V = full.reshape(shape)
    energy = np.sum(np.diff(V, axis=0) ** 2) + np.sum(np.diff(V, axis=1) ** 2) + h * h * np.sum(V ** 2)
    return float(energy)
