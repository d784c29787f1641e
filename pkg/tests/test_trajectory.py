import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventvelo.errors import DegenerateInput, IsotropicCloud, NearParallelPlanes
from eventvelo.geometry import CameraModel, Line2D, Line3D, back_project_plane, project
from eventvelo.io import RigConfig
from eventvelo.simulator import default_rig
from eventvelo.trajectory import Fit2D, fit_line_2d, line_to_closest_arcs, triangulate_line_3d

from conftest import identity_camera


def eig2_oracle(pts):
    """Principal direction of a 2D cloud from the closed-form 2x2 eigen solution."""
    c = pts.mean(axis=0)
    d = pts - c
    sxx, syy, sxy = (d[:, 0] ** 2).sum(), (d[:, 1] ** 2).sum(), (d[:, 0] * d[:, 1]).sum()
    theta = 0.5 * math.atan2(2 * sxy, sxx - syy)
    u = np.array([math.cos(theta), math.sin(theta)])
    n = np.array([-u[1], u[0]])
    rms = math.sqrt(((d @ n) ** 2).mean())
    return c, u, rms


def exact_fit(cam, line3d, s=(0.2, 0.9)):
    a, b = project(cam, line3d.point_at(np.array(s)))
    return Fit2D(Line2D(a, b - a), 0.0, 2)


def two_plane_oracle(n1, d1, n2, d2, anchor):
    """Line of intersection of n1.X=d1 and n2.X=d2, anchored at the point nearest `anchor`."""
    u = np.cross(n1, n2)
    u /= np.linalg.norm(u)
    # minimise |X - anchor|^2 subject to both planes (Lagrange system)
    A = np.zeros((5, 5))
    A[:3, :3] = 2 * np.eye(3)
    A[:3, 3], A[:3, 4] = n1, n2
    A[3, :3], A[4, :3] = n1, n2
    rhs = np.r_[2 * np.asarray(anchor), d1, d2]
    X = np.linalg.solve(A, rhs)[:3]
    return X, u


# ------------------------------------------------------------------ 2D fit


def test_diagonal_points():
    f = fit_line_2d([(0, 0), (1, 1), (2, 2)])
    assert np.allclose(f.line.dir, [math.sqrt(0.5)] * 2)
    assert f.line.distance([0, 0])[0] < 1e-12
    assert f.rms < 1e-12 and f.inliers == 3


def test_vertical_points():
    f = fit_line_2d([(0, 0), (0, 1), (0, 2)])
    assert np.allclose(f.line.dir, [0, 1])
    assert abs(f.line.point[0]) < 1e-12


def test_direction_follows_input_order():
    f = fit_line_2d([(2, 2), (1, 1), (0, 0)])
    assert np.allclose(f.line.dir, [-math.sqrt(0.5)] * 2)


def test_fit_errors():
    with pytest.raises(DegenerateInput):
        fit_line_2d([(1, 1), (1, 1), (1, 1)])
    with pytest.raises(IsotropicCloud):
        fit_line_2d([(0, 0), (1, 0), (1, 1), (0, 1)])


def test_noisy_fit_matches_eigen_oracle():
    rng = np.random.default_rng(11)
    for trial in range(20):
        ang = rng.uniform(0, math.pi)
        u = np.array([math.cos(ang), math.sin(ang)])
        n = np.array([-u[1], u[0]])
        s = rng.uniform(-300, 300, 100)
        pts = np.array([400, 300]) + s[:, None] * u + rng.normal(0, 1.5, 100)[:, None] * n
        f = fit_line_2d(pts)
        c, uo, rms = eig2_oracle(pts)
        cosang = min(1.0, abs(f.line.dir @ uo))
        assert math.degrees(math.acos(cosang)) < 0.5
        assert abs(f.rms - rms) <= 0.1 * rms
        assert np.allclose(f.line.point, c)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, math.pi))
def test_tls_is_locally_optimal(seed, ang):
    rng = np.random.default_rng(seed)
    u = np.array([math.cos(ang), math.sin(ang)])
    pts = rng.uniform(-50, 50, 40)[:, None] * u + rng.normal(0, 2, (40, 2))
    f = fit_line_2d(pts)
    sse = ((f.line.distance(pts)) ** 2).sum()
    for delta in (-0.1, 0.1):
        a = math.radians(delta)
        R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        rot = Line2D(f.line.point, R @ f.line.dir)
        assert (rot.distance(pts) ** 2).sum() >= sse - 1e-9 * max(sse, 1)


def test_trimmed_fit_ignores_far_points():
    pts = [(x, 0.01 * x) for x in range(100)] + [(50, 80), (60, -90)]
    f = fit_line_2d(pts, trim_px=3.0)
    assert f.inliers == 100
    assert abs(f.line.dir[1] / f.line.dir[0] - 0.01) < 1e-9
    assert not f.mask[-1] and not f.mask[-2]


# ------------------------------------------------------------ triangulation


def _rig(cams, muzzle=(0, 0, 2)):
    return RigConfig(dict(enumerate(cams)), np.asarray(muzzle, dtype=float))


def test_two_camera_exact_round_trip():
    # The line runs along X, so a baseline along X would put both cameras in
    # one plane with it; the second camera sits 0.5 m off along Y instead.
    truth = Line3D([0, 0, 2], [1, 0, 0])
    rig = _rig([identity_camera(), identity_camera(T=(0, -0.5, 0))])
    fits = {c: exact_fit(rig.cameras[c], truth, s=(-0.3, 0.4)) for c in rig.cameras}
    L = triangulate_line_3d(fits, rig)
    assert np.linalg.norm(L.origin - truth.origin) < 1e-9
    assert math.acos(min(1.0, L.dir @ truth.dir)) < 1e-9 or np.linalg.norm(L.dir - truth.dir) < 1e-9


def test_same_center_is_degenerate():
    truth = Line3D([0, 0, 2], [1, 0.1, 0.05])
    rig = _rig([identity_camera(), identity_camera(fx=1500)])
    fits = {c: exact_fit(rig.cameras[c], truth) for c in rig.cameras}
    with pytest.raises(NearParallelPlanes):
        triangulate_line_3d(fits, rig)


def test_baseline_along_line_is_degenerate():
    truth = Line3D([0, 0, 2], [1, 0, 0])
    rig = _rig([identity_camera(), identity_camera(T=(-0.5, 0, 0))])
    fits = {c: exact_fit(rig.cameras[c], truth, s=(-0.3, 0.4)) for c in rig.cameras}
    with pytest.raises(NearParallelPlanes):
        triangulate_line_3d(fits, rig)


def test_single_view_rejected():
    rig = _rig([identity_camera()])
    with pytest.raises(DegenerateInput):
        triangulate_line_3d({0: exact_fit(rig.cameras[0], Line3D([0, 0, 2], [1, 0, 0]))}, rig)


def test_simulator_rig_matches_plane_intersection():
    rig = default_rig()
    truth = Line3D([0, 0, 0], [1, -0.02, 0.04])
    fits = {c: exact_fit(rig.cameras[c], truth) for c in rig.cameras}
    L = triangulate_line_3d(fits, rig)
    (n1, d1), (n2, d2) = (back_project_plane(rig.cameras[c], fits[c].line) for c in (0, 1))
    X, u = two_plane_oracle(n1, d1, n2, d2, rig.muzzle)
    assert np.linalg.norm(L.origin - X) < 1e-6
    assert np.linalg.norm(L.dir - u * np.sign(u @ L.dir)) < 1e-9
    assert np.linalg.norm(L.origin - truth.origin) < 1e-6
    assert L.dir @ truth.dir > 0  # travels the same way


def test_three_cameras_least_squares():
    rig0 = default_rig()
    cams = list(rig0.cameras.values())
    cams.append(CameraModel.look_at(cams[0].intrinsics, [0.5, 0.6, -1.2], [0.5, 0, 0]))
    rig = _rig(cams, muzzle=(0, 0, 0))
    truth = Line3D([0, 0, 0], [1, -0.02, 0.04])
    fits = {c: exact_fit(rig.cameras[c], truth) for c in rig.cameras}
    L = triangulate_line_3d(fits, rig)
    assert np.linalg.norm(L.origin - truth.origin) < 1e-6
    assert np.linalg.norm(L.dir - truth.dir) < 1e-9


def test_reprojection_round_trip_on_simulated_fits(scene_run):
    res = scene_run.result
    for cid, fit in res.fits.items():
        pts = res.line.point_at(np.linspace(0.05, 1.0, 10))
        px = project(scene_run.rig.cameras[cid], pts)
        assert np.all(fit.line.distance(px) <= 2 * fit.rms + 1e-6)


def test_arc_increases_with_time_on_simulated_edges(scene_run):
    res = scene_run.result
    for cid, edge in res.edges.items():
        arcs = line_to_closest_arcs(res.line, scene_run.rig.cameras[cid], edge.events.xy)
        # per 100 us bin the median arc must not go backwards
        bins = edge.events.t // 100
        med = [np.median(arcs[bins == b]) for b in np.unique(bins)]
        assert np.all(np.diff(med) >= 0)


def test_closest_arcs_on_exact_projections():
    rig = default_rig()
    L = Line3D([0, 0, 0], [1, -0.02, 0.04])
    s = np.linspace(0.1, 0.9, 9)
    for cam in rig.cameras.values():
        px = project(cam, L.point_at(s))
        assert np.allclose(line_to_closest_arcs(L, cam, px), s, atol=1e-9)
