"""Region adjacency graph tests: construction, splitting, freezing, costs."""

import math

import numpy as np
import pytest

from cseg.errors import (
    ClassWithoutScribbleError,
    ConflictingScribblesError,
    DepthMismatchError,
    DimensionMismatchError,
)
from cseg.rag import (
    RagEdge,
    RagGraph,
    build_rag,
    freeze_scribbled,
    pairwise_weights,
    split_by_scribbles,
    unary_from_probability,
    unary_from_scribbles,
)
from cseg.raster import DenseFieldMap, ImagePlane, SuperpixelMap
from cseg.scribble import STUFF, Scribble, ScribbleSet

from oracles import superpixels_all_connected


def field_from(values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    h, w, d = values.shape
    return DenseFieldMap(w, h, d, values)


def sp_from(ids):
    ids = np.asarray(ids, dtype=np.int32)
    h, w = ids.shape
    return SuperpixelMap(w, h, ids)


class TestBuildRag:
    def test_minimal_two_nodes(self):
        g = build_rag(sp_from([[0, 1]]), field_from([[0.0, 1.0]]))
        assert g.node_count == 2
        assert g.sizes.tolist() == [1, 1]
        assert g.features.tolist() == [[0.0], [1.0]]
        assert len(g.edges) == 1
        e = g.edges[0]
        assert (e.u, e.v, e.boundary_len) == (0, 1, 1)

    def test_four_tiles_no_diagonal(self):
        # 4x4 image in four 2x2 tiles: each tile touches its row/col
        # neighbor over 2 pixel pairs; diagonal tiles share no 4-adjacency
        ids = [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
        g = build_rag(sp_from(ids), field_from(np.zeros((4, 4))))
        assert g.sizes.tolist() == [4, 4, 4, 4]
        assert sorted((e.u, e.v, e.boundary_len) for e in g.edges) == [
            (0, 1, 2), (0, 2, 2), (1, 3, 2), (2, 3, 2),
        ]

    def test_single_superpixel(self):
        g = build_rag(sp_from([[0, 0], [0, 0]]), field_from(np.ones((2, 2))))
        assert g.node_count == 1 and g.edges == []

    def test_feature_means(self):
        g = build_rag(sp_from([[0, 0, 1]]), field_from([[0.2, 0.4, 0.9]]))
        assert g.features[:, 0].tolist() == [pytest.approx(0.3), 0.9]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            build_rag(sp_from([[0, 1]]), field_from(np.zeros((3, 3))))

    def test_partition_property(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            h, w = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            from cseg.raster import grid_superpixels, normalize_superpixels

            sp = normalize_superpixels(rng.integers(0, 5, (h, w)))
            g = build_rag(sp, field_from(rng.random((h, w))))
            assert g.sizes.sum() == h * w

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        from cseg.raster import normalize_superpixels

        sp = normalize_superpixels(rng.integers(0, 4, (6, 6)))
        feat = field_from(rng.random((6, 6)))
        g = build_rag(sp, feat)
        perm = rng.permutation(sp.count)
        permuted = sp_from(perm[sp.ids])
        g2 = build_rag(permuted, feat)
        assert np.allclose(g2.sizes[perm], g.sizes)
        assert np.allclose(g2.features[perm], g.features)
        mapped = sorted(
            (min(perm[e.u], perm[e.v]), max(perm[e.u], perm[e.v]), e.boundary_len)
            for e in g.edges
        )
        original2 = sorted((e.u, e.v, e.boundary_len) for e in g2.edges)
        assert mapped == original2


class TestSplitByScribbles:
    def test_two_regions_split_superpixel(self):
        sp = sp_from(np.zeros((4, 6), dtype=int))
        feat = field_from(np.zeros((4, 6)))
        g = build_rag(sp, feat)
        ss = ScribbleSet(
            [
                Scribble([(0, 0), (0, 3)], 0, 0, thickness=1),
                Scribble([(5, 0), (5, 3)], 1, 1, thickness=1),
            ],
            {0: STUFF, 1: STUFF},
        )
        g2, sp2 = split_by_scribbles(g, sp, ss, feat)
        assert sp2.count >= 2
        assert superpixels_all_connected(sp2.ids)
        # no new superpixel carries pixels of both scribbles
        from cseg.scribble import rasterize

        m0 = rasterize(ss.scribbles[0], 6, 4)
        m1 = rasterize(ss.scribbles[1], 6, 4)
        assert not (set(np.unique(sp2.ids[m0])) & set(np.unique(sp2.ids[m1])))

    def test_untouched_superpixels_unchanged(self):
        sp = sp_from([[0, 0, 1, 1]])
        feat = field_from([[0.0, 0.0, 1.0, 1.0]])
        g = build_rag(sp, feat)
        ss = ScribbleSet([Scribble([(0, 0)], 0, 0, thickness=1)], {0: STUFF})
        g2, sp2 = split_by_scribbles(g, sp, ss, feat)
        assert np.array_equal(sp2.ids, sp.ids)

    def test_tie_goes_to_lower_region_id(self):
        # 3x1 superpixel, region 1 on the left pixel, region 2 on the right:
        # the middle pixel is equidistant and must join region 1
        sp = sp_from([[0, 0, 0]])
        feat = field_from([[0.0, 0.0, 0.0]])
        g = build_rag(sp, feat)
        ss = ScribbleSet(
            [
                Scribble([(0, 0)], 0, 1, thickness=1),
                Scribble([(2, 0)], 1, 2, thickness=1),
            ],
            {0: STUFF, 1: STUFF},
        )
        g2, sp2 = split_by_scribbles(g, sp, ss, feat)
        assert sp2.ids.tolist() == [[0, 0, 1]]

    def test_split_then_freeze_never_conflicts(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            h, w = 10, 12
            sp = sp_from(np.zeros((h, w), dtype=int))
            feat = field_from(rng.random((h, w)))
            g = build_rag(sp, feat)
            pts_a = [(int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(2)]
            pts_b = [(int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(2)]
            ss = ScribbleSet(
                [Scribble(pts_a, 0, 0, thickness=1), Scribble(pts_b, 1, 1, thickness=1)],
                {0: STUFF, 1: STUFF},
            )
            from cseg.scribble import validate_policy

            if not validate_policy(ss, w, h).ok:
                continue  # overlapping strokes violate the split precondition
            g2, sp2 = split_by_scribbles(g, sp, ss, feat)
            freeze_scribbled(g2, ss)  # must not raise


class TestFreezeScribbled:
    def build(self):
        sp = sp_from([[0, 1, 2, 3, 4]])
        feat = field_from([[0.0, 0.1, 0.2, 0.3, 0.4]])
        return build_rag(sp, feat), sp

    def test_direct_coverage(self):
        g, sp = self.build()
        ss = ScribbleSet([Scribble([(0, 0)], 7, 3, thickness=1)], {7: STUFF})
        fixed = freeze_scribbled(g, ss)
        assert fixed.assignments[0] == (7, 3, None)

    def test_surrounded_node_inherits(self):
        # path 0-1-2; scribbles of one region on nodes 0 and 2 surround node 1
        g, sp = self.build()
        ss = ScribbleSet(
            [
                Scribble([(0, 0), (1, 0)], 2, 5, thickness=1),
                Scribble([(3, 0), (4, 0)], 2, 5, thickness=1),
            ],
            {2: STUFF},
        )
        report = freeze_scribbled(g, ss, on_conflict="newest")
        assert report.assignments[2] == (2, 5, None)

    def test_mixed_neighbors_not_fixed(self):
        g, sp = self.build()
        ss = ScribbleSet(
            [
                Scribble([(0, 0), (1, 0)], 2, 5, thickness=1),
                Scribble([(3, 0), (4, 0)], 3, 6, thickness=1),
            ],
            {2: STUFF, 3: STUFF},
        )
        fixed = freeze_scribbled(g, ss)
        assert 2 not in fixed.assignments

    def test_conflict_raises(self):
        g, sp = self.build()
        ss = ScribbleSet(
            [
                Scribble([(0, 0)], 1, 1, thickness=1),
                Scribble([(0, 0)], 2, 2, thickness=1),
            ],
            {1: STUFF, 2: STUFF},
        )
        with pytest.raises(ConflictingScribblesError):
            freeze_scribbled(g, ss)

    def test_newest_wins_mode(self):
        g, sp = self.build()
        ss = ScribbleSet(
            [
                Scribble([(0, 0)], 1, 1, thickness=1),
                Scribble([(0, 0)], 2, 2, thickness=1),
            ],
            {1: STUFF, 2: STUFF},
        )
        report = freeze_scribbled(g, ss, on_conflict="newest")
        assert report.assignments[0] == (2, 2, None)
        assert report.conflicts == [(0, 1, 2)]


class TestUnaries:
    def test_one_hot_probability(self):
        prob = DenseFieldMap(2, 1, 2, np.array([[[1.0, 0.0], [0.0, 1.0]]]), probability=True)
        sp = sp_from([[0, 1]])
        table = unary_from_probability(prob, sp)
        assert table.unary[0, 0] == 0.0
        assert table.unary[0, 1] == pytest.approx(math.sqrt(2.0))

    def test_uniform_probability(self):
        prob = DenseFieldMap(1, 1, 2, np.array([[[0.5, 0.5]]]), probability=True)
        table = unary_from_probability(prob, sp_from([[0]]))
        expected = math.sqrt(0.5 ** 2 + 0.5 ** 2)  # 0.70711 via direct formula
        assert table.unary[0, 0] == pytest.approx(expected)
        assert table.unary[0, 1] == pytest.approx(expected)

    def test_three_class_orthogonal(self):
        prob = DenseFieldMap(1, 1, 3, np.array([[[1.0, 0.0, 0.0]]]), probability=True)
        table = unary_from_probability(prob, sp_from([[0]]))
        assert table.unary[0, 1] == pytest.approx(math.sqrt(2.0))

    def test_depth_mismatch(self):
        prob = DenseFieldMap(1, 1, 2, np.array([[[0.5, 0.5]]]), probability=True)
        with pytest.raises(DepthMismatchError):
            unary_from_probability(prob, sp_from([[0]]), class_count=3)

    def test_probability_costs_bounded(self):
        rng = np.random.default_rng(4)
        raw = rng.random((5, 5, 3))
        raw /= raw.sum(axis=2, keepdims=True)
        prob = DenseFieldMap(5, 5, 3, raw, probability=True)
        from cseg.raster import grid_superpixels

        table = unary_from_probability(prob, grid_superpixels(5, 5, 4))
        assert (table.unary >= 0).all()
        assert (table.unary <= math.sqrt(2.0) + 1e-12).all()

    def test_scribble_unary_own_mean(self):
        sp = sp_from([[0, 1]])
        g = build_rag(sp, field_from([[0.0, 1.0]]))
        ss = ScribbleSet([Scribble([(0, 0)], 0, 0, thickness=1)], {0: STUFF})
        table = unary_from_scribbles(g, ss)
        assert table.unary[0, 0] == 0.0

    def test_scribble_unary_weighted_mean(self):
        # class 0 scribbled on two equal-size nodes with features 0 and 1:
        # the class center is 0.5; a node at 0.25 costs 0.25
        sp = sp_from([[0, 1, 2]])
        g = build_rag(sp, field_from([[0.0, 1.0, 0.25]]))
        ss = ScribbleSet(
            [
                Scribble([(0, 0)], 0, 0, thickness=1),
                Scribble([(1, 0)], 0, 1, thickness=1),
            ],
            {0: STUFF},
        )
        table = unary_from_scribbles(g, ss)
        assert table.unary[2, 0] == pytest.approx(0.25)

    def test_class_without_scribble(self):
        sp = sp_from([[0, 1]])
        g = build_rag(sp, field_from([[0.0, 1.0]]))
        ss = ScribbleSet([Scribble([(0, 0)], 0, 0, thickness=1)], {0: STUFF, 9: STUFF})
        with pytest.raises(ClassWithoutScribbleError):
            unary_from_scribbles(g, ss, class_ids=[0, 9])
        table = unary_from_scribbles(g, ss)  # default set: scribbled classes
        assert table.class_ids == [0]


class TestPairwise:
    def test_values(self):
        g = RagGraph(
            np.array([1, 1, 1]),
            np.array([[0.0], [0.0], [1.0]]),
            [RagEdge(0, 1, 1), RagEdge(1, 2, 1), RagEdge(0, 2, 0, pseudo=True)],
        )
        pairwise_weights(g)
        assert g.edges[0].weight == 1.0
        assert g.edges[1].weight == pytest.approx(math.exp(-1.0))
        assert g.edges[2].weight == 0.0

    def test_range(self):
        rng = np.random.default_rng(8)
        g = RagGraph(
            np.ones(6, dtype=np.int64),
            rng.random((6, 4)),
            [RagEdge(i, j, 1) for i in range(6) for j in range(i + 1, 6)],
        )
        pairwise_weights(g)
        for e in g.edges:
            assert 0.0 < e.weight <= 1.0
