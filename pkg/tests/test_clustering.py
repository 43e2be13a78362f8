"""DBSCAN determinism and brute-force oracle equivalence."""

import numpy as np
import pytest

from roadlidar.clustering import dbscan, dbscan_labels
from roadlidar.core import DataError, Frame

from oracles import brute_dbscan, canonical_partition


def _frame(pts, padding=None):
    pts = np.asarray(pts, dtype=np.float64)
    if padding is None:
        padding = np.zeros(len(pts), dtype=bool)
    return Frame(1, pts, padding)


def _ball(center, n, radius, rng):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random((n, 1)) ** (1 / 3)
    return np.asarray(center) + v * r


class TestDbscanBasics:
    def test_tight_ball_is_one_cluster(self):
        rng = np.random.default_rng(0)
        pts = _ball([1, 1, 1], 10, 0.05, rng)
        clusters, noise = dbscan(_frame(pts), epsilon=0.5, min_pts=4)
        assert len(clusters) == 1
        assert len(clusters[0]) == 10
        assert len(noise) == 0

    def test_two_balls_and_isolated_points(self):
        rng = np.random.default_rng(1)
        pts = np.vstack(
            [
                _ball([0, 0, 0], 10, 0.2, rng),
                _ball([10, 0, 0], 10, 0.2, rng),
                np.array([[0, 5, 0], [5, 5, 0], [0, -5, 0], [-5, 0, 0], [5, -5, 5]], dtype=float),
            ]
        )
        frame = _frame(pts)
        clusters, noise = dbscan(frame, epsilon=0.5, min_pts=4)
        assert len(clusters) == 2
        assert len(noise) == 5
        labels = brute_dbscan(pts, 0.5, 4)
        got = dbscan_labels(pts, 0.5, 4)
        assert canonical_partition(got) == canonical_partition(labels)

    def test_min_pts_one_no_noise(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-10, 10, (30, 3))
        clusters, noise = dbscan(_frame(pts), epsilon=0.3, min_pts=1)
        assert len(noise) == 0
        assert sum(len(c) for c in clusters) == 30

    def test_padding_excluded(self):
        pts = np.vstack([_ball([0, 0, 0], 8, 0.1, np.random.default_rng(3)), [[0.0, 0.0, 0.0]]])
        padding = np.zeros(9, dtype=bool)
        padding[8] = True
        clusters, noise = dbscan(_frame(pts, padding), epsilon=0.5, min_pts=4)
        covered = set()
        for c in clusters:
            covered |= set(c.point_indices.tolist())
        covered |= set(noise.tolist())
        assert 8 not in covered
        assert covered == set(range(8))

    def test_invalid_params(self):
        f = _frame(np.zeros((1, 3)) + 1.0)
        with pytest.raises(DataError):
            dbscan(f, epsilon=0.0, min_pts=3)
        with pytest.raises(DataError):
            dbscan(f, epsilon=0.5, min_pts=0)


class TestDbscanProperties:
    def test_partition_covers_all_points(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-5, 5, (200, 3))
        frame = _frame(pts)
        clusters, noise = dbscan(frame, epsilon=0.8, min_pts=4)
        indices = [i for c in clusters for i in c.point_indices.tolist()] + noise.tolist()
        assert sorted(indices) == list(range(200))  # disjoint and complete

    def test_oracle_equivalence_random_frames(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            n = int(rng.integers(2, 300))
            # mix of clumps and scatter so all code paths fire
            clumps = [
                _ball(rng.uniform(-8, 8, 3), int(rng.integers(3, 25)), 0.4, rng)
                for _ in range(int(rng.integers(1, 5)))
            ]
            pts = np.vstack(clumps + [rng.uniform(-8, 8, (n, 3))])
            eps = float(rng.uniform(0.2, 1.2))
            min_pts = int(rng.integers(1, 8))
            got = dbscan_labels(pts, eps, min_pts)
            want = brute_dbscan(pts, eps, min_pts)
            np.testing.assert_array_equal(got, want)  # identical labels, not just partitions

    def test_core_set_independent_of_input_order(self):
        rng = np.random.default_rng(6)
        pts = np.vstack([_ball([0, 0, 0], 20, 0.5, rng), rng.uniform(-5, 5, (50, 3))])
        eps, min_pts = 0.6, 5

        def cores(p):
            labels = dbscan_labels(p, eps, min_pts)
            return {
                tuple(np.round(p[i], 9))
                for i in range(len(p))
                if np.sum(np.sum((p - p[i]) ** 2, axis=1) <= eps * eps) >= min_pts
                and labels[i] >= 0
            }

        perm = rng.permutation(len(pts))
        assert cores(pts) == cores(pts[perm])

    def test_scale_covariance_power_of_two(self):
        # powers of two keep the squared-distance comparisons bit-exact
        rng = np.random.default_rng(7)
        pts = rng.uniform(-4, 4, (150, 3))
        eps, min_pts = 0.7, 4
        base = dbscan_labels(pts, eps, min_pts)
        for s in (0.5, 2.0, 8.0):
            scaled = dbscan_labels(pts * s, eps * s, min_pts)
            np.testing.assert_array_equal(base, scaled)

    def test_cluster_size_at_least_min_pts(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(-6, 6, (300, 3))
        clusters, _ = dbscan(_frame(pts), epsilon=0.9, min_pts=5)
        assert all(len(c) >= 5 for c in clusters)
