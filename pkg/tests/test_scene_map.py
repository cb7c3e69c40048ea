import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asp import geom
from asp.errors import StaleMap
from asp.geom import Pose3D
from asp.scene_map import (Crop, MapConfig, Object, ObjectMap, Segment, SegmentedFrame,
                           build_from_frame, integrate_keyframe, merge_objects, merge_pair,
                           rank_crops)
from asp.semantics import cosine, mock_embed, normalize


def _blob(center, n=6, size=0.06):
    g = np.linspace(-size / 2, size / 2, n)
    return np.array([[x, y, z] for x in g for y in g for z in g]) + np.asarray(center)


def _frame(segments, frame_id=0):
    return SegmentedFrame(Pose3D(np.zeros(3)), segments, frame_id)


def _seg(i, cloud, label, area=100):
    return Segment(i, cloud, area, False, label)


def _obj(oid, cloud, label, n_crops=1):
    f = mock_embed(label)
    crops = [Crop(10, False, k, cloud, view_label=label, feature=f) for k in range(n_crops)]
    return Object(oid, geom.voxel_downsample(cloud), crops, f)


def test_build_separates_distinct_objects(embedder):
    segs = [_seg(0, _blob([0, 0, 0]), "red ball"), _seg(1, _blob([0.5, 0, 0]), "blue mug"),
            _seg(2, _blob([0, 0.5, 0]), "green cube")]
    m = build_from_frame(_frame(segs), embedder)
    assert len(m) == 3
    assert [o.gt_label for o in m.objects] == ["red ball", "blue mug", "green cube"]
    assert m.frame_count == 1
    assert len(build_from_frame(_frame([]), embedder)) == 0


def test_build_merges_oversegmented_mug(embedder):
    mug = _blob([0.2, 0.1, 0.05], n=10, size=0.1)
    a, b = mug[mug[:, 0] <= 0.215], mug[mug[:, 0] >= 0.185]
    # oracle: thresholds say these two pieces must merge
    assert geom.overlap_ratio(geom.voxel_downsample(a), geom.voxel_downsample(b)) >= 0.4
    m = build_from_frame(_frame([_seg(0, a, "blue mug"), _seg(1, b, "blue mug")]), embedder)
    assert len(m) == 1
    assert m.objects[0].gt_label == "blue mug"


def test_same_geometry_different_semantics_kept(embedder):
    c = _blob([0, 0, 0])
    m = build_from_frame(_frame([_seg(0, c, "red ball"), _seg(1, c, "blue mug")]), embedder)
    assert len(m) == 2


def test_merge_chain_unions_transitively():
    # A~B and B~C overlap but A and C do not
    a = _obj(0, _blob([0.00, 0, 0]), "egg")
    b = _obj(1, _blob([0.04, 0, 0]), "egg")
    c = _obj(2, _blob([0.08, 0, 0]), "egg")
    cfg = MapConfig(geom_thresh=0.3)
    assert geom.overlap_ratio(a.point_cloud, c.point_cloud) < 0.3
    assert geom.overlap_ratio(a.point_cloud, b.point_cloud) >= 0.3
    assert geom.overlap_ratio(b.point_cloud, c.point_cloud) >= 0.3
    out = merge_objects(ObjectMap([a, b, c]), cfg=cfg)
    assert len(out) == 1 and out.objects[0].id == 0


def test_merge_pair_feature_weighting():
    u, v = np.eye(4)[0], np.eye(4)[1]
    a = Object(0, _blob([0, 0, 0]), [Crop(1, False, k, None, feature=u) for k in range(3)], u)
    b = Object(1, _blob([0, 0, 0]), [Crop(1, False, 9, None, feature=v)], v)
    m = merge_pair(a, b)
    assert np.allclose(m.features, normalize(3 * u + v))
    one = Object(2, a.point_cloud, a.crops[:1], u)
    assert np.allclose(merge_pair(one, b).features, normalize(u + v))
    same = merge_pair(a, a)
    assert cosine(same.features, a.features) == pytest.approx(1.0)
    assert np.allclose(geom.aabb_extents(same.point_cloud), geom.aabb_extents(a.point_cloud))


def test_rank_crops():
    crops = [Crop(100, False, 0, None), Crop(500, False, 1, None), Crop(300, False, 2, None)]
    assert [c.segment_area for c in rank_crops(crops)] == [500, 300, 100]
    crops = [Crop(500, True, 0, None), Crop(300, False, 1, None)]
    assert [c.segment_area for c in rank_crops(crops, 0.5)] == [300, 500]
    eq = [Crop(5, False, 3, None), Crop(5, False, 1, None)]
    assert [c.source_frame_id for c in rank_crops(eq)] == [1, 3]
    a, b = Crop(5, False, 0, None), Crop(5, False, 0, None)
    ranked = rank_crops([a, b])
    assert ranked[0] is a and ranked[1] is b


@st.composite
def object_sets(draw):
    n = draw(st.integers(1, 7))
    labels = ["egg", "mug", "red ball"]
    objs = []
    for i in range(n):
        x = draw(st.sampled_from([0.0, 0.03, 0.06, 0.3, 0.6]))
        y = draw(st.sampled_from([0.0, 0.03, 0.4]))
        objs.append(_obj(i, _blob([x, y, 0]), draw(st.sampled_from(labels)),
                         draw(st.integers(1, 3))))
    return ObjectMap(objs, next_id=n)


@given(object_sets())
def test_merge_fixpoint_and_coverage(m):
    cfg = MapConfig()
    once = merge_objects(m, cfg=cfg)
    twice = merge_objects(once, cfg=cfg)
    assert len(once) == len(twice)
    assert sum(o.point_cloud.shape[0] for o in once.objects) == \
        sum(o.point_cloud.shape[0] for o in twice.objects)
    objs = once.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            assert not (geom.overlap_ratio(objs[i].point_cloud, objs[j].point_cloud)
                        >= cfg.geom_thresh
                        and cosine(objs[i].features, objs[j].features) >= cfg.sem_thresh)

    def voxels(mm):
        pts = np.vstack([o.point_cloud for o in mm.objects])
        return set(geom.voxel_keys(pts, 0.02).tolist())

    assert voxels(once) == voxels(m)


@given(object_sets())
def test_merge_order_independent_count(m):
    rev = ObjectMap(list(reversed(m.objects)), next_id=m.next_id)
    assert len(merge_objects(m)) == len(merge_objects(rev))


def test_integrate_keyframe(embedder):
    segs = [_seg(0, _blob([0, 0, 0]), "red ball"), _seg(1, _blob([0.5, 0, 0]), "blue mug")]
    m = build_from_frame(_frame(segs), embedder)
    m2 = integrate_keyframe(m, _frame(segs, 1), embedder)
    assert len(m2) == 2 and m2.frame_count == 2
    more = segs + [_seg(2, _blob([1, 1, 0]), "egg")]
    m3 = integrate_keyframe(m2, _frame(more, 2), embedder)
    assert len(m3) == 3
    m4 = integrate_keyframe(m3, _frame([], 3), embedder)
    assert len(m4) == 3 and m4.frame_count == 4


def test_stale_map_get_and_json_roundtrip(embedder):
    m = build_from_frame(_frame([_seg(0, _blob([0, 0, 0]), "red ball")]), embedder)
    back = ObjectMap.from_json(m.to_json())
    assert np.allclose(back.objects[0].point_cloud, m.objects[0].point_cloud)
    assert np.allclose(back.objects[0].features, m.objects[0].features)
    assert back.next_id == 1
    m.stale = True
    with pytest.raises(StaleMap):
        m.get(0)
