import math

import numpy as np
import pytest

from boxgeom.box3d import (
    EDGE_FAMILIES,
    AmbiguousAssembly,
    Box3D,
    CameraCalib,
    DirectionTriplet,
    angular_distance,
    azimuth_elevation,
    box_center,
    canonical_angle,
    construct_box,
    face_center,
    focal_from_vps,
    vehicle_viewpoint,
    view_vectors,
    viewpoint_3d,
)
from boxgeom.errors import DegenerateFace, DegenerateSilhouette, NonOrthogonalConfiguration
from boxgeom.geom import convex_hull, polygon_area
from boxgeom.rast import points_in_quad
from boxgeom.synth import affine_box, distance_to_polygon, perspective_box, random_affine_cuboid, silhouette_polygon


def cube_box(center=(0.0, 0.0), size=2.0, depth=1.0):
    # oblique cube view symmetric about the vertical axis
    c = np.asarray(center)
    return affine_box(c + [0, size / 2], [-size, -depth], [size, -depth], [0, -size])


def test_box_center_unit_square_example():
    b = np.zeros((8, 2))
    b[2], b[4], b[5], b[3] = (1, 0), (0, 1), (1, 1), (0, 0)
    assert np.allclose(box_center(Box3D(b)), [0.5, 0.5])


def test_box_center_scales(cuboid):
    box = cuboid.box
    assert np.allclose(box_center(box.scaled(2.5)), 2.5 * box_center(box))


def test_box_center_inside_diagonal_hull(rng):
    for _ in range(50):
        box = random_affine_cuboid(rng).box
        hull = convex_hull(box.b[[2, 3, 4, 5]])
        c = box_center(box)
        assert any(
            points_in_quad(np.array(c[0]), np.array(c[1]), hull[[0, i, i + 1]].tolist() + [hull[0].tolist()])
            for i in range(1, len(hull) - 1)
        )


def test_view_vectors_symmetric_cube_roof_points_up():
    v = view_vectors(cube_box())
    assert np.allclose(v.v_r, (0.0, -1.0), atol=1e-12)


def test_view_vectors_unit_and_pointing_to_faces(rng):
    for _ in range(50):
        box = random_affine_cuboid(rng).box
        v = view_vectors(box)
        arr = v.as_array()
        assert np.allclose(np.linalg.norm(arr, axis=1), 1.0, atol=1e-9)
        cc = box_center(box)
        for vec, name in zip(arr, ("front", "side", "roof")):
            assert vec @ (face_center(box, name) - cc) > 0
        assert v.d == box.d


def test_view_vectors_scale_invariant(cuboid):
    a = view_vectors(cuboid.box).as_array()
    b = view_vectors(cuboid.box.scaled(0.37)).as_array()
    assert np.allclose(a, b, atol=1e-12)


def test_box_json_round_trip(cuboid):
    back = Box3D.from_json(cuboid.box.to_json())
    assert np.array_equal(back.b, cuboid.box.b) and back.d == cuboid.box.d


def test_invalid_face_detected():
    b = cube_box().b.copy()
    b[0] = b[5]  # collapse the front face
    with pytest.raises(DegenerateFace):
        Box3D(b).validate()


def test_canonical_angle_range():
    assert canonical_angle((1, 0)) == 0.0
    assert canonical_angle((-1, 0)) == 0.0
    assert canonical_angle((0, 1)) == -90.0
    assert canonical_angle((0, -1)) == -90.0
    assert canonical_angle((1, 1)) == pytest.approx(45.0)
    assert canonical_angle((-1, 1)) == pytest.approx(-45.0)


def test_construct_box_round_trip(rng):
    for _ in range(30):
        c = random_affine_cuboid(rng)
        box = construct_box(silhouette_polygon(c.box), c.dirs, c.box.d)
        assert np.max(np.linalg.norm(box.b - c.box.b, axis=1)) < 1e-6
        assert box.d == c.box.d


def test_construct_box_invariants_with_perturbed_directions(rng):
    for _ in range(50):
        c = random_affine_cuboid(rng)
        noisy = DirectionTriplet.from_angles(*(a + rng.uniform(-3, 3) for a in c.dirs.angles))
        hull = silhouette_polygon(c.box)
        box = construct_box(hull, noisy, 1)
        assert box.is_valid()
        # roof above bottom: every roof vertex has smaller y than the vertex below it
        assert np.all(box.b[:4, 1] < box.b[4:, 1])
        # every edge follows one of the three directions within 0.5 deg
        for fam, u in zip("fsr", (noisy.u_f, noisy.u_s, noisy.u_r)):
            for i, j in EDGE_FAMILIES[fam]:
                e = box.b[j] - box.b[i]
                cosang = abs(e @ np.asarray(u)) / np.linalg.norm(e)
                assert math.degrees(math.acos(min(1.0, cosang))) < 0.5
        # hull inside the union of the visible faces, dilated by 1 px
        for x, y in hull:
            faces = [box.face(n) for n in ("front", "side", "roof")]
            inside = any(points_in_quad(np.array(x), np.array(y), q) for q in faces)
            near = min(float(distance_to_polygon(x, y, q)) for q in faces)
            assert inside or near <= 1.0


def test_construct_box_ambiguous_directions():
    rect = np.array([[0, 0], [40, 0], [40, 30], [0, 30]], dtype=float)
    dirs = DirectionTriplet.from_angles(0.0, 89.9, -90.0)
    with pytest.raises(AmbiguousAssembly):
        construct_box(rect, dirs)


def test_construct_box_tiny_silhouette():
    tri = np.array([[0, 0], [2, 0], [0, 2]], dtype=float)
    assert abs(polygon_area(tri)) < 9
    with pytest.raises(DegenerateSilhouette):
        construct_box(tri, DirectionTriplet.from_angles(-30, 30, -90))


def test_construct_box_flips_downward_vertical(cuboid):
    a = cuboid.dirs.angles
    # -90 and +90 describe the same undirected line; result must be identical
    box1 = construct_box(silhouette_polygon(cuboid.box), cuboid.dirs, 1)
    flipped = DirectionTriplet(cuboid.dirs.u_f, cuboid.dirs.u_s, tuple(-np.asarray(cuboid.dirs.u_r)))
    box2 = construct_box(silhouette_polygon(cuboid.box), flipped, 1)
    assert np.allclose(box1.b, box2.b)
    assert a == cuboid.dirs.angles


def test_focal_examples():
    assert focal_from_vps((100, 0), (-400, 0), (0, 0)) == pytest.approx(200.0)
    assert focal_from_vps((0, 300), (0, -300), (0, 0)) == pytest.approx(300.0)
    assert focal_from_vps((-400, 0), (100, 0), (0, 0)) == pytest.approx(200.0)
    with pytest.raises(NonOrthogonalConfiguration):
        focal_from_vps((100, 0), (200, 0), (0, 0))


def test_viewpoint_3d_examples():
    box = cube_box(center=(320, 240))
    calib = CameraCalib(tuple(box_center(box)), 500.0)
    assert np.allclose(viewpoint_3d(box, calib), [0, 0, 1])
    c = box_center(box)
    calib = CameraCalib((c[0] - 500.0, c[1]), 500.0)
    assert np.allclose(viewpoint_3d(box, calib), [math.sqrt(0.5), 0, math.sqrt(0.5)])
    assert angular_distance(viewpoint_3d(box, calib), viewpoint_3d(box.translated(0, 0), calib)) == 0.0


def test_angular_distance_symmetric(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    assert angular_distance(a, b) == pytest.approx(angular_distance(b, a))
    assert angular_distance(a, a) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("az", [-150, -120, -60, -30, 0, 30, 60, 120, 150])
@pytest.mark.parametrize("el", [10, 25])
def test_azimuth_elevation_recovered_from_perspective_box(az, el):
    box, calib = perspective_box(az, el)
    box.validate()
    got_az, got_el = azimuth_elevation(box, calib)
    assert got_az == pytest.approx(az, abs=0.5)
    assert got_el == pytest.approx(el, abs=0.5)


def test_focal_recovered_from_box_vanishing_points():
    from boxgeom.box3d import vanishing_point

    box, calib = perspective_box(40, 15)
    vf, vs = vanishing_point(box, "f"), vanishing_point(box, "s")
    f = focal_from_vps(vf[:2] / vf[2], vs[:2] / vs[2], calib.principal)
    assert f == pytest.approx(calib.f, rel=1e-6)


def test_vehicle_viewpoint_unit(rng):
    box, calib = perspective_box(70, 20)
    assert np.linalg.norm(vehicle_viewpoint(box, calib)) == pytest.approx(1.0)


def test_camera_calib_default_and_json():
    c = CameraCalib.default_for_image(640, 480, 700.0)
    assert c.principal == (319.5, 239.5)
    assert CameraCalib.from_json(c.to_json()) == c
    with pytest.raises(Exception):
        CameraCalib((0, 0), -1.0)
