"""Smoke tests for the Python bindings."""

import math

import numpy as np

import frustumfit as ff


def test_iou():
    a = ff.Box3(ff.Vec3(0, 0, 0), h=1.0, l=1.0, w=1.0, yaw=0.0)
    b = ff.Box3(ff.Vec3(0.5, 0, 0), h=1.0, l=1.0, w=1.0, yaw=0.0)
    assert abs(ff.iou_bev(a, a) - 1.0) < 1e-12
    assert abs(ff.iou_bev(a, b) - 1.0 / 3.0) < 1e-12
    assert ff.iou_3d(a, b) <= ff.iou_bev(a, b) + 1e-12
    cs = ff.corners(a)
    assert cs.shape == (8, 3)
    assert np.allclose(np.abs(cs), 0.5)


def test_dims_round_trip():
    enc = ff.encode_dims(1.8, 4.2, 1.7, 1.53, 3.88, 1.63)
    dec = ff.decode_dims(*enc, 1.53, 3.88, 1.63)
    assert all(abs(x - y) < 1e-12 for x, y in zip(dec, (1.8, 4.2, 1.7)))
    assert abs(ff.dimension_loss((0.5, 0, 0), (0, 0, 0)) - 0.125) < 1e-12


def test_box_target_round_trip():
    base = ff.Box3(ff.Vec3(10, -2, -1), h=1.5, l=4.2, w=1.7, yaw=0.4)
    gt = ff.Box3(ff.Vec3(10.3, -1.8, -1.05), h=1.55, l=4.0, w=1.8, yaw=0.55)
    delta = ff.encode_targets(base, gt)
    assert delta.shape == (7,)
    back = ff.decode_box(base, delta)
    assert abs(back.center.x - gt.center.x) < 1e-6
    assert abs(back.w - gt.w) < 1e-6
    assert abs(back.yaw - gt.yaw) < 1e-6


def test_scene_to_best_box():
    gt = ff.Box3(ff.Vec3(12.0, 1.0, -0.95), h=1.5, l=4.4, w=1.8, yaw=0.5)
    points, source = ff.make_scene(
        [(gt, ff.CarCategory.SEDAN)],
        ground_radius=14.0,
        ground_density=3.0,
        clutter_density=0.3,
        seed=5,
    )
    assert points.shape[1] == 4
    assert len(source) == points.shape[0]

    cfg = ff.ProposalConfig()
    cfg.iterations = 25
    cfg.seed = 9
    subset = ff.points_in_box(
        points, ff.Box3(ff.Vec3(12.0, 1.0, -0.5), h=4.0, l=9.0, w=9.0, yaw=0.0)
    )
    props = ff.generate_proposals(subset, gt.h, gt.l, gt.w, config=cfg)
    assert 0 < len(props) <= 80 * cfg.iterations

    maps = ff.ScoreMaps.build(samples=6, density=250.0, seed=3)
    best = ff.fit_best_box(subset, props, maps)
    assert ff.iou_bev(best.box, gt) > 0.3

    vox = ff.voxelize_context(points, best.box)
    assert vox.shape == (24, 54, 32)
    assert 0 < vox.sum() < 0.05 * vox.size


def test_average_precision_hand_case():
    def sq(x):
        return ff.Box3(ff.Vec3(x, 0, 0), h=1.0, l=1.0, w=1.0, yaw=0.0)

    scenes = [(([(sq(0), 0.9), (sq(30), 0.8), (sq(10), 0.7)]),
               [sq(0), sq(10)])]
    ap = ff.average_precision(scenes)
    assert abs(ap - 28.0 / 33.0) < 1e-9


def main():
    test_iou()
    test_dims_round_trip()
    test_box_target_round_trip()
    test_scene_to_best_box()
    test_average_precision_hand_case()
    print("python smoke tests passed")


if __name__ == "__main__":
    main()
