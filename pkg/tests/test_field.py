import numpy as np
import pytest
from conftest import disk_flow

from obstacleflow.conformal import DiskMap, fit_to_tolerance
from obstacleflow.errors import DomainError, ValidationError
from obstacleflow.field import (FlowSolver, FreePlane, VortexBlobs, compute_alpha, field_grid,
                                fullplane_biot_savart, harmonic_psi_single, kernel_psi0_single,
                                solve_harmonic_multi)
from obstacleflow.geometry import JordanCurve, SingularObstacle, build_domain, make_cutoffs

TWO_PI = 2 * np.pi


def rot(p, a):
    c, s = np.cos(a), np.sin(a)
    return p @ np.array([[c, s], [-s, c]])


@pytest.fixture(scope="module")
def ellipse_flow():
    cv = JordanCurve.ellipse((0.2, -0.1), 1.5, 0.7, angle=0.4, samples=256)
    m = fit_to_tolerance(cv, 1e-10)
    return cv, m


@pytest.fixture(scope="module")
def segment_two():
    obs = [SingularObstacle.segment((-1, 0), (1, 0), id=1), SingularObstacle.disk((0, 2.5), 0.5, id=2)]
    dom = build_domain(obs, 16)
    maps = [fit_to_tolerance(c, 1e-8) for c in dom.curves]
    return dom, maps, FlowSolver(maps, dom.curves, [0.7, -0.3])


# kernel part

def test_kernel_zero_strength_and_oracle():
    m = DiskMap(0j, 1.0)
    x = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert np.all(kernel_psi0_single(m, VortexBlobs([[2.0, 0.0]], [0.0]), x) == 0.0)
    val = kernel_psi0_single(m, VortexBlobs([[2.0, 0.0]], [TWO_PI]), np.array([[3.0, 0.0]]))[0]
    assert val == pytest.approx(np.log(1.0 / 5.0), abs=1e-14)


def test_kernel_rotation_invariant():
    m = DiskMap(0j, 1.0)
    base = kernel_psi0_single(m, VortexBlobs([[2.0, 0.0]], [1.0]), np.array([[0.0, 3.0]]))[0]
    for a in (0.3, 1.7, 4.0):
        b = VortexBlobs(rot(np.array([[2.0, 0.0]]), a), [1.0])
        assert kernel_psi0_single(m, b, rot(np.array([[0.0, 3.0]]), a))[0] == pytest.approx(base, abs=1e-14)


def test_kernel_vanishes_on_boundary(ellipse_flow):
    cv, m = ellipse_flow
    blobs = VortexBlobs([[2.5, 0.3], [-1.0, 1.8], [0.4, -1.6]], [1.0, -0.4, 0.8])
    vals = kernel_psi0_single(m, blobs, cv.resample(513).points)
    assert np.abs(vals).max() <= 10 * max(m.residual, 1e-14)


def test_kernel_inside_rejected():
    flow = disk_flow()
    dec = flow.decompose(VortexBlobs([[2.0, 0.0]], [1.0]))
    with pytest.raises(DomainError):
        dec.velocity(np.array([[0.2, 0.0]]))


# harmonic part

def test_harmonic_single_values():
    assert harmonic_psi_single(DiskMap(0j, 1.0), np.array([[2.0, 0.0]]))[0] == pytest.approx(0.1103178, abs=1e-7)
    r, R = 0.7, 2.3
    x = np.array([[R * np.cos(1.0), R * np.sin(1.0)]])
    assert harmonic_psi_single(DiskMap(0j, r), x)[0] == pytest.approx(np.log(R / r) / TWO_PI, abs=1e-14)


def test_harmonic_k1_reduces_to_single(ellipse_flow):
    cv, m = ellipse_flow
    hf = solve_harmonic_multi([m], [cv.z])[0]
    x = np.array([[3.0, 1.0], [-2.0, -2.0], [0.0, 2.0]])
    assert np.abs(hf.value(x) - harmonic_psi_single(m, x)).max() < 1e-10


def test_two_disk_boundary_constants(two_disks):
    curves, maps, flow = two_disks
    for i, hf in enumerate(flow.harmonic):
        for l, cv in enumerate(curves):
            v = hf.value(cv.resample(301).points)
            assert v.max() - v.min() < 1e-6
            if l == i:
                assert np.abs(v).max() < 1e-8
            else:
                assert v.mean() == pytest.approx(hf.constants[l], abs=1e-8)


def test_harmonic_log_growth(segment_two):
    _, maps, flow = segment_two
    for hf in flow.harmonic:
        r = np.array([1e3, 1e4])
        v = hf.value(np.column_stack([r, 0 * r]))
        # (1/2pi) ln|x| + O(1): the difference is constant far out
        assert (v[1] - v[0]) == pytest.approx(np.log(10) / TWO_PI, abs=1e-6)


def test_weak_circulation_delta_segment(segment_two):
    from obstacleflow.diagnostics import weak_circulation

    dom, maps, flow = segment_two
    cuts = make_cutoffs(dom, 0.2)
    none = VortexBlobs(np.zeros((0, 2)), np.zeros(0))
    table = np.array([[weak_circulation(h.velocity, none, c) for c in cuts] for h in flow.harmonic])
    assert np.abs(table - np.eye(2)).max() < 1e-6


def test_near_touching_obstacles_raise():
    s = 0.501
    curves = [JordanCurve.circle((-s, 0), 0.5, 256, owner=1), JordanCurve.circle((s, 0), 0.5, 256, owner=2)]
    maps = [DiskMap(-s + 0j, 0.5), DiskMap(s + 0j, 0.5)]
    with pytest.raises(DomainError, match="too close") as exc:
        FlowSolver(maps, curves, [0, 0])
    assert exc.value.details["separation"] == pytest.approx(0.002, rel=1e-3)
    assert "condition" in exc.value.details
    # a wider gap is resolved by raising the multipole order
    s = 0.51
    curves = [JordanCurve.circle((-s, 0), 0.5, 256, owner=1), JordanCurve.circle((s, 0), 0.5, 256, owner=2)]
    flow = FlowSolver([DiskMap(-s + 0j, 0.5), DiskMap(s + 0j, 0.5)], curves, [0, 0])
    assert flow.nterms > 24


# correction

def test_correction_zero_cases(two_disks):
    _, _, flow = two_disks
    dec = flow.decompose(VortexBlobs(np.zeros((0, 2)), np.zeros(0)))
    assert np.all(dec.correction == 0)
    assert disk_flow().decompose(VortexBlobs([[2.0, 0.0]], [1.0])).correction.size == 0


def test_correction_maximum_principle(two_disks):
    curves, _, flow = two_disks
    blobs = VortexBlobs([[0.0, 10.0]], [1.0])
    dec = flow.decompose(blobs)
    corr = lambda p: dec.psi0(p) - kernel_psi0_single(flow.maps[0], blobs, p)
    bnd = np.vstack([c.points for c in curves])
    data_sup = np.abs(kernel_psi0_single(flow.maps[0], blobs, bnd)).max()
    g = np.linspace(-8, 8, 61)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[flow.outside(pts)]
    assert np.abs(corr(pts)).max() <= 1.05 * data_sup
    # psi0 vanishes on obstacle 1 and is constant on obstacle 2
    v1 = dec.psi0(curves[0].points)
    v2 = dec.psi0(curves[1].points)
    assert np.abs(v1).max() < 1e-8 and v2.max() - v2.min() < 1e-8


# alpha

def test_alpha_without_blobs_equals_gamma(segment_two):
    _, _, flow = segment_two
    dec = flow.decompose(VortexBlobs(np.zeros((0, 2)), np.zeros(0)))
    assert np.allclose(compute_alpha(dec), flow.gamma)


def test_alpha_single_disk_counts_blob_images():
    # psi0 has circulation -sum(Gamma) around the obstacle (image vortices at the
    # reflected points), so alpha = gamma + sum(Gamma)
    flow = disk_flow(TWO_PI)
    dom = build_domain([SingularObstacle.disk((0, 0), 1.0)], None)
    cut = make_cutoffs(dom, 0.25)
    blobs = VortexBlobs([[2.0, 1.0]], [1.0])
    dec = flow.decompose(blobs)
    exact = compute_alpha(dec)
    weak = compute_alpha(dec, cut, method="weak")
    assert exact == pytest.approx([TWO_PI + 1.0], abs=1e-12)
    assert weak == pytest.approx(exact, abs=1e-6)


def test_alpha_weak_matches_exact_two_obstacles(segment_two):
    dom, _, flow = segment_two
    cuts = make_cutoffs(dom, 0.2)
    blobs = VortexBlobs([[1.6, 1.2], [-1.7, 1.5], [0.5, -1.0]], [1.0, -0.5, 0.3])
    dec = flow.decompose(blobs)
    assert np.abs(compute_alpha(dec, cuts, "weak") - compute_alpha(dec)).max() < 1e-5


def test_compute_alpha_errors(two_disks):
    dec = two_disks[2].decompose(VortexBlobs([[0.0, 2.0]], [1.0]))
    with pytest.raises(ValidationError):
        compute_alpha(dec, method="bogus")
    with pytest.raises(ValidationError):
        compute_alpha(dec, method="weak")


# velocity

def test_pure_circulation_velocity():
    flow = disk_flow(TWO_PI)
    dec = flow.decompose(VortexBlobs(np.zeros((0, 2)), np.zeros(0)))
    assert np.allclose(dec.velocity(np.array([[2.0, 0.0]])), [[0.0, 0.5]], atol=1e-14)


@pytest.mark.parametrize("d", [1.5, 2.0, 3.0])
def test_image_blob_velocity(d):
    G = 1.3
    flow = disk_flow(0.0)
    u = flow.blob_velocity(VortexBlobs([[d, 0.0]], [G]))
    assert np.allclose(u, [[0.0, -G / (TWO_PI * d * (d * d - 1))]], atol=1e-14)


def test_image_construction_through_map(ellipse_flow):
    # gamma = 0: each blob, its image -Gamma at 1/conj(T(y)) and +Gamma at the
    # centre of the mapped plane, pulled back through T
    cv, m = ellipse_flow
    flow = FlowSolver([m], [cv], [0.0])
    blobs = VortexBlobs([[2.6, 0.5], [-0.5, 1.6]], [1.0, -0.7])
    dec = flow.decompose(blobs)
    x = np.array([[3.0, -1.0], [-2.5, -0.8], [0.5, 2.4]])

    def psi(p):
        t = m.evaluate(p[:, 0] + 1j * p[:, 1])[:, None]
        ty = m.evaluate(blobs.z)[None, :]
        val = np.log(np.abs(t - ty)) - np.log(np.abs(t - 1 / np.conj(ty))) + np.log(np.abs(t))
        return val @ blobs.strengths / TWO_PI

    h = 1e-5
    e1, e2 = np.array([h, 0]), np.array([0, h])
    u = np.column_stack([-(psi(x + e2) - psi(x - e2)) / (2 * h), (psi(x + e1) - psi(x - e1)) / (2 * h)])
    assert np.abs(dec.velocity(x) - u).max() < 1e-8


def test_divergence_curl_and_tangency(segment_two, rng):
    dom, _, flow = segment_two
    blobs = VortexBlobs([[1.7, 1.0], [-1.5, 1.4], [0.0, -0.9]], [1.0, -0.5, 0.3])
    dec = flow.decompose(blobs)
    pts = np.array([[2.2, -1.3], [-2.0, 0.4], [0.9, 1.8], [3.0, 2.5]])
    h = 1e-4
    ex, ey = np.array([h, 0]), np.array([0, h])
    ux = (dec.velocity(pts + ex) - dec.velocity(pts - ex)) / (2 * h)
    uy = (dec.velocity(pts + ey) - dec.velocity(pts - ey)) / (2 * h)
    umag = np.linalg.norm(dec.velocity(pts), axis=1)
    div = ux[:, 0] + uy[:, 1]
    curl = ux[:, 1] - uy[:, 0]
    assert np.all(np.abs(div) <= 1e-5 * umag / h)
    assert np.all(np.abs(curl) < 1e-6)
    # tangency on every boundary
    for cv in dom.curves:
        z = cv.resample(257)
        nu = -1j * z.derivative()
        nu = nu / np.abs(nu)
        u = dec.velocity(z.points, check=False)
        un = u[:, 0] * nu.real + u[:, 1] * nu.imag
        assert np.abs(un).max() <= 1e-3 * np.linalg.norm(u, axis=1).max()


def test_rotation_equivariance():
    flow = disk_flow(0.8)
    pos = np.array([[2.0, 0.3], [-1.2, 1.4], [0.1, -1.9]])
    gam = np.array([1.0, -0.6, 0.4])
    x = np.array([[2.5, 1.0], [-3.0, 0.5]])
    u0 = flow.decompose(VortexBlobs(pos, gam)).velocity(x)
    a = 0.9
    u1 = flow.decompose(VortexBlobs(rot(pos, a), gam)).velocity(rot(x, a))
    assert np.abs(u1 - rot(u0, a)).max() < 1e-10


# full plane

def test_fullplane_oracles():
    u = fullplane_biot_savart(VortexBlobs([[0.0, 0.0]], [TWO_PI]), np.array([[1.0, 0.0]]))
    assert np.allclose(u, [[0.0, 1.0]], atol=1e-15)
    d, G = 0.8, 2.0
    pair = VortexBlobs([[0.0, d / 2], [0.0, -d / 2]], [G, -G])
    v = FreePlane().blob_velocity(pair)
    assert np.allclose(v, [[G / (TWO_PI * d), 0.0]] * 2, atol=1e-14)
    blobs = VortexBlobs([[0.1, 0.2], [-0.3, 0.0], [0.2, -0.2]], [1.0, 0.5, -0.2])
    tot = blobs.strengths.sum()
    errs = []
    for R in (10.0, 20.0):
        x = np.array([[R, 0.3 * R]])
        far = tot * np.array([[-x[0, 1], x[0, 0]]]) / (TWO_PI * (x ** 2).sum())
        errs.append(np.abs(fullplane_biot_savart(blobs, x) - far).max())
    assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.05)


def test_blob_validation():
    with pytest.raises(ValidationError):
        VortexBlobs([[0.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ValidationError):
        VortexBlobs([[0.0, 0.0]], [1.0], core=0.0)
    with pytest.raises(ValidationError):
        VortexBlobs([[np.nan, 0.0]], [1.0])


def test_field_grid_nan_inside(two_disks):
    _, _, flow = two_disks
    blobs = VortexBlobs([[0.0, 1.0]], [1.0])
    rows = field_grid(flow.decompose(blobs), blobs, (-5, 5), (-2, 2), 21, 9)
    assert rows.shape == (21 * 9, 5)
    inside = ~flow.outside(rows[:, :2])
    assert inside.any() and np.all(np.isnan(rows[inside, 2:]))
    assert np.all(np.isfinite(rows[~inside]))
