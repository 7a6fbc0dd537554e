import numpy as np
import pytest
from scipy import ndimage

from fpvolseg.errors import DimensionError, KindError, ParameterError, RangeError
from fpvolseg.metrics import (
    aggregate_score,
    connected_components,
    dice_coefficient,
    evaluate_case,
    fnv,
    fpv,
    summarize,
)
from fpvolseg.volume import Volume3D
from conftest import mask_volume
from oracles import flood_fill_label, same_partition, unmatched_volume_bruteforce


def _empty(shape=(6, 6, 6)):
    return np.zeros(shape, dtype=bool)


def test_dice_examples():
    a = _empty()
    a[1:3, 1:3, 1:3] = True
    assert dice_coefficient(mask_volume(a), mask_volume(a)) == 1.0
    b = _empty()
    b[4:, 4:, 4:] = True
    assert dice_coefficient(mask_volume(a), mask_volume(b)) == 0.0
    p = np.array([1, 1, 1, 0], dtype=bool).reshape(1, 1, 4)
    g = np.array([1, 1, 0, 1], dtype=bool).reshape(1, 1, 4)
    assert dice_coefficient(mask_volume(p), mask_volume(g)) == pytest.approx(2 / 3)
    assert dice_coefficient(mask_volume(_empty()), mask_volume(_empty())) == 1.0
    with pytest.raises(DimensionError):
        dice_coefficient(mask_volume(_empty()), mask_volume(_empty((5, 5, 5))))


def test_dice_symmetric(rng):
    for _ in range(20):
        a = rng.random((8, 8, 8)) < 0.3
        b = rng.random((8, 8, 8)) < 0.3
        assert dice_coefficient(a, b) == dice_coefficient(b, a)


def test_components_examples():
    m = _empty()
    m[2, 2, 1] = m[2, 2, 3] = True
    for c in (6, 18, 26):
        assert connected_components(mask_volume(m), c).num_components == 2
    m = _empty()
    m[1, 1, 1] = m[2, 2, 2] = True
    assert connected_components(mask_volume(m), 26).num_components == 1
    assert connected_components(mask_volume(m), 18).num_components == 2
    assert connected_components(mask_volume(m), 6).num_components == 2
    m = _empty()
    m[1, 1, 1] = m[1, 2, 2] = True  # edge neighbors
    assert connected_components(mask_volume(m), 18).num_components == 1
    assert connected_components(mask_volume(m), 6).num_components == 2
    assert connected_components(mask_volume(_empty()), 18).num_components == 0


def test_components_label_order_is_scan_order():
    m = _empty()
    m[4, 0, 0] = True
    m[0, 5, 5] = True
    labels = connected_components(mask_volume(m), 6).labels
    assert labels[0, 5, 5] == 1 and labels[4, 0, 0] == 2


def test_components_errors():
    with pytest.raises(KindError):
        connected_components(np.full((2, 2, 2), 0.5))
    with pytest.raises(ParameterError):
        connected_components(_empty(), 8)


@pytest.mark.parametrize("connectivity", [6, 18, 26])
def test_components_match_flood_fill(connectivity):
    r = np.random.default_rng(connectivity)
    for density in (0.05, 0.2, 0.35, 0.6):
        m = r.random((20, 20, 20)) < density
        ours = connected_components(m, connectivity)
        ref, n = flood_fill_label(m, connectivity)
        assert ours.num_components == n
        assert same_partition(ours.labels, ref)
        # flood fill seeds in scan order too, so labels agree exactly
        assert np.array_equal(ours.labels, ref)


@pytest.mark.parametrize("connectivity", [6, 18, 26])
def test_components_match_scipy(connectivity):
    r = np.random.default_rng(100 + connectivity)
    rank = {6: 1, 18: 2, 26: 3}[connectivity]
    structure = ndimage.generate_binary_structure(3, rank)
    for _ in range(5):
        m = r.random((16, 16, 16)) < 0.3
        ref, n = ndimage.label(m, structure)
        ours = connected_components(m, connectivity)
        assert ours.num_components == n and same_partition(ours.labels, ref)


def test_fpv_examples():
    gt = _empty((10, 10, 10))
    gt[1:4, 1:4, 1:4] = True
    pred = gt.copy()
    pred[2, 2, 2] = False
    assert fpv(mask_volume(pred), mask_volume(gt)) == 0.0
    pred = gt.copy()
    pred[6:8, 6:8, 6:8] = True  # 8-voxel disjoint component
    assert fpv(mask_volume(pred), mask_volume(gt)) == pytest.approx(8 * 3.375 / 1000)
    assert fpv(mask_volume(pred), mask_volume(gt)) == pytest.approx(0.027)
    pred = _empty((10, 10, 10))
    pred[3:8, 3:8, 3:8] = True  # touches gt at the single voxel (3,3,3)
    assert fpv(mask_volume(pred), mask_volume(gt)) == 0.0


def test_fnv_examples():
    gt = _empty((10, 10, 10))
    gt[0:4, 0:5, 0:5] = True  # 100 voxels
    assert fnv(mask_volume(gt), mask_volume(gt)) == 0.0
    assert fnv(mask_volume(_empty((10, 10, 10))), mask_volume(gt)) == pytest.approx(0.3375)
    pred = _empty((10, 10, 10))
    pred[3, 4, 4] = True
    assert fnv(mask_volume(pred), mask_volume(gt)) == 0.0


def test_volumes_respect_spacing():
    gt = _empty()
    gt[0, 0, 0] = True
    v = fnv(mask_volume(_empty(), (1.0, 2.0, 3.0)), mask_volume(gt, (1.0, 2.0, 3.0)))
    assert v == pytest.approx(6 / 1000)
    with pytest.raises(DimensionError):
        fpv(mask_volume(gt, (1.0, 1.0, 1.0)), mask_volume(gt))


@pytest.mark.parametrize("connectivity", [6, 18, 26])
def test_fpv_fnv_against_brute_force(connectivity):
    r = np.random.default_rng(7 + connectivity)
    for _ in range(10):
        p = r.random((12, 12, 12)) < 0.15
        g = r.random((12, 12, 12)) < 0.15
        P, G = mask_volume(p), mask_volume(g)
        assert fpv(P, G, connectivity) == pytest.approx(unmatched_volume_bruteforce(p, g, connectivity, 3.375))
        assert fnv(P, G, connectivity) == pytest.approx(unmatched_volume_bruteforce(g, p, connectivity, 3.375))
        assert fpv(P, G, connectivity) == fnv(G, P, connectivity)


def test_aggregate_score():
    assert aggregate_score(1.0, 0, 0) == 1.0
    assert aggregate_score(0.8, 1.2, 0.3) == 0.65
    assert aggregate_score(0, 5, 5) == -1.0
    for bad in ((1.2, 0, 0), (0.5, -1, 0), (0.5, 0, -0.1)):
        with pytest.raises(RangeError):
            aggregate_score(*bad)


def test_evaluate_case_examples():
    gt = _empty((20, 20, 20))
    gt[2:6, 2:6, 2:6] = True  # detected lesion, 64 voxels
    gt[12:15, 12:15, 12:15] = True  # missed lesion, 27 voxels
    pred = _empty((20, 20, 20))
    pred[2:6, 2:6, 2:6] = True
    pred[16:18, 2:4, 2:4] = True  # false positive, 8 voxels
    r = evaluate_case(mask_volume(pred), mask_volume(gt))
    assert r.dice == pytest.approx(2 * 64 / (72 + 91))
    assert r.fpv_ml == pytest.approx(8 * 3.375 / 1000)
    assert r.fnv_ml == pytest.approx(27 * 3.375 / 1000)
    assert r.score == r.dice - 0.1 * r.fpv_ml - 0.1 * r.fnv_ml
    assert evaluate_case(mask_volume(gt), mask_volume(gt)).as_dict() == {"dice": 1.0, "fpv_ml": 0.0, "fnv_ml": 0.0, "score": 1.0}
    e = mask_volume(_empty())
    assert evaluate_case(e, e).as_dict() == {"dice": 1.0, "fpv_ml": 0.0, "fnv_ml": 0.0, "score": 1.0}


def test_summarize():
    gt = _empty()
    gt[0, 0, 0] = True
    reports = [evaluate_case(mask_volume(gt), mask_volume(gt)), evaluate_case(mask_volume(_empty()), mask_volume(gt))]
    s = summarize(reports)
    assert s["mean_dice"] == 0.5
    assert s["mean_fnv_ml"] == pytest.approx(3.375 / 1000 / 2)
    with pytest.raises(ParameterError):
        summarize([])


def test_non_mask_volume_rejected():
    with pytest.raises(KindError):
        dice_coefficient(Volume3D(np.full((2, 2, 2), 0.3), kind="probability"), mask_volume(np.zeros((2, 2, 2))))
