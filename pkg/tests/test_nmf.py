"""Profile-trajectory matrix, NNDSVD, alternating NMF and cluster summaries."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolespace.dtm import RoleMixture
from rolespace.ingest import ActivityRecord
from rolespace.nmf import (
    ClusterAssignment,
    NmfModel,
    ProfileMatrix,
    TrajectoryNmf,
    build_profile_matrix,
    cluster_summary,
    discretize,
    fit_nmf,
    nndsvd_init,
    read_profile_csv,
    write_cluster_report_csv,
    write_cluster_report_json,
    write_factors,
    write_profile_csv,
)


def mixture(user, quarter, theta):
    return RoleMixture(user, quarter, np.asarray(theta, dtype=float))


def trajectory(user, quarters, K=2):
    # Distinct but valid simplex points per quarter.
    out = []
    for i, q in enumerate(quarters):
        p = 0.2 + 0.6 * ((i + 1) / (len(quarters) + 1))
        out.append(mixture(user, q, [p, 1 - p] + [0.0] * (K - 2)))
    return out


class TestProfileMatrix:
    def test_excludes_user_below_min_quarters(self):
        mixtures = trajectory("short", [0, 1, 2]) + trajectory("long", range(4))
        matrix = build_profile_matrix(mixtures, n_quarters=6, n_roles=2,
                                      eligible_min_quarters=4)
        assert list(matrix.user_ids) == ["long"]

    def test_single_quarter_unit_vector(self):
        matrix = build_profile_matrix([mixture("u", 0, [1.0, 0.0])],
                                      n_quarters=3, n_roles=2,
                                      eligible_min_quarters=1)
        expected = np.zeros(6)
        expected[0] = 1.0
        np.testing.assert_array_equal(matrix.values[0], expected)

    def test_quarter_major_layout(self):
        matrix = build_profile_matrix(
            [mixture("u", 0, [1.0, 0.0]), mixture("u", 2, [0.0, 1.0])],
            n_quarters=3, n_roles=2, eligible_min_quarters=1)
        row = matrix.values[0]
        norm = np.sqrt(2.0)
        assert row[0 * 2 + 0] == pytest.approx(1 / norm)
        assert row[2 * 2 + 1] == pytest.approx(1 / norm)
        assert row[[1, 2, 3, 4]].tolist() == [0, 0, 0, 0]

    def test_rows_unit_norm(self):
        mixtures = trajectory("a", range(5)) + trajectory("b", range(2, 8))
        matrix = build_profile_matrix(mixtures, 8, 2, eligible_min_quarters=4)
        np.testing.assert_allclose(np.linalg.norm(matrix.values, axis=1), 1.0,
                                   atol=1e-9)

    def test_quarter_beyond_horizon_rejected(self):
        with pytest.raises(ValueError):
            build_profile_matrix([mixture("u", 5, [1, 0])], n_quarters=3,
                                 n_roles=2, eligible_min_quarters=1)

    def test_duplicate_user_quarter_rejected(self):
        pair = [mixture("u", 0, [1, 0]), mixture("u", 0, [0, 1])]
        with pytest.raises(ValueError):
            build_profile_matrix(pair, 2, 2, eligible_min_quarters=1)

    def test_no_eligible_users_rejected(self):
        with pytest.raises(ValueError):
            build_profile_matrix(trajectory("u", [0]), 4, 2,
                                 eligible_min_quarters=4)

    def test_type_invariants(self):
        with pytest.raises(ValueError):
            ProfileMatrix(("u",), np.array([[0.0, 0.0]]), 1, 2)
        with pytest.raises(ValueError):
            ProfileMatrix(("u",), np.array([[0.5, 0.5]]), 1, 2)  # norm != 1


class TestNndsvd:
    def test_diagonal_dominant_direction(self):
        W, H = nndsvd_init(np.diag([2.0, 1.0]), 1)
        # Dominant singular triple is (2, e_0, e_0).
        np.testing.assert_allclose(W[:, 0], [np.sqrt(2.0), 0.0], atol=1e-12)
        np.testing.assert_allclose(H[0], [np.sqrt(2.0), 0.0], atol=1e-12)
        np.testing.assert_allclose(W @ H, [[2.0, 0.0], [0.0, 0.0]], atol=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            nndsvd_init(np.zeros((3, 3)), 2)

    def test_repeated_calls_bitwise_identical(self):
        M = np.random.default_rng(0).random((12, 9))
        W1, H1 = nndsvd_init(M, 4)
        W2, H2 = nndsvd_init(M, 4)
        assert np.array_equal(W1, W2) and np.array_equal(H1, H2)

    def test_factors_non_negative(self):
        M = np.random.default_rng(1).random((10, 6))
        W, H = nndsvd_init(M, 5)
        assert (W >= 0).all() and (H >= 0).all()

    def test_components_beyond_rank_bound_rejected(self):
        with pytest.raises(ValueError):
            nndsvd_init(np.ones((3, 2)), 3)

    def test_negative_matrix_rejected(self):
        with pytest.raises(ValueError):
            nndsvd_init(np.array([[1.0, -0.1]]), 1)


class TestFitNmf:
    def test_rank_one_recovery(self):
        rng = np.random.default_rng(5)
        w = rng.random(20) + 0.5
        h = rng.random(8) + 0.5
        M = np.outer(w, h)
        model = fit_nmf(M, 1, max_iter=200, tol=1e-12)
        error = np.linalg.norm(M - model.W @ model.H) / np.linalg.norm(M)
        assert error <= 1e-6

    def test_overcomplete_exact_fit(self):
        M = np.eye(4) * 1.0
        model = fit_nmf(M, 4, max_iter=500, tol=0.0)
        assert model.objective_trace[-1] <= 1e-8

    def test_zero_iterations_returns_init(self):
        M = np.random.default_rng(2).random((6, 4))
        W0, H0 = nndsvd_init(M, 2)
        model = fit_nmf(M, 2, max_iter=0, tol=0.0)
        assert np.array_equal(model.W, W0) and np.array_equal(model.H, H0)
        assert len(model.objective_trace) == 1

    def test_non_finite_rejected(self):
        M = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(ValueError):
            fit_nmf(M, 1)

    def test_trace_non_increasing_and_factors_non_negative(self):
        for seed in range(5):
            M = np.random.default_rng(seed).random((15, 7))
            model = fit_nmf(M, 3, max_iter=60, tol=1e-10)
            trace = np.asarray(model.objective_trace)
            assert (np.diff(trace) <= 0).all()
            assert (model.W >= 0).all() and (model.H >= 0).all()

    def test_custom_init_used(self):
        M = np.random.default_rng(3).random((6, 5))
        W0 = np.ones((6, 2))
        H0 = np.ones((2, 5))
        model = fit_nmf(M, 2, max_iter=0, tol=0.0, init=(W0, H0))
        assert np.array_equal(model.W, W0)

    def test_cluster_count_sweep_invariants(self):
        M = np.abs(np.random.default_rng(11).normal(size=(30, 14)))
        for kc in range(4, 11):
            model = fit_nmf(M, kc, max_iter=30, tol=1e-8)
            trace = np.asarray(model.objective_trace)
            assert (np.diff(trace) <= 0).all()
            assert (model.W >= 0).all() and (model.H >= 0).all()

    def test_model_invariants_enforced(self):
        with pytest.raises(ValueError):
            NmfModel(np.ones((2, 1)), np.ones((1, 2)), (1.0, 2.0))  # rising
        with pytest.raises(ValueError):
            NmfModel(-np.ones((2, 1)), np.ones((1, 2)), (1.0,))


class TestDiscretize:
    def test_argmax_row(self):
        assignment = discretize(np.array([[0.1, 0.9]]))
        assert assignment.as_dict() == {"0": 1}

    def test_tie_goes_to_lowest_index(self):
        assignment = discretize(np.array([[0.5, 0.5]]))
        assert assignment.as_dict() == {"0": 0}

    def test_one_assignment_per_row(self):
        W = np.random.default_rng(0).random((17, 4))
        assert discretize(W).n_users == 17

    def test_row_scaling_invariance(self):
        W = np.random.default_rng(4).random((10, 3))
        scaled = W * np.array([[7.0]] * 10)
        assert discretize(W).labels == discretize(scaled).labels

    def test_all_zero_row_cluster_zero(self, caplog):
        W = np.array([[0.0, 0.0], [0.2, 0.1]])
        with caplog.at_level("WARNING"):
            assignment = discretize(W, ["z", "u"])
        assert assignment.as_dict()["z"] == 0
        assert any("z" in message for message in caplog.messages)

    def test_assignment_count_invariant(self):
        with pytest.raises(ValueError):
            ClusterAssignment((("u", 5),), n_clusters=3)


def records_for(user, quarters):
    return [ActivityRecord(user, q, (1, 0)) for q in quarters]


class TestClusterSummary:
    def test_two_user_statistics(self):
        assignment = ClusterAssignment((("a", 0), ("b", 0)), n_clusters=1)
        records = records_for("a", range(4)) + records_for("b", range(6))
        mixtures = trajectory("a", range(4)) + trajectory("b", range(6))
        (report,) = cluster_summary(assignment, records, mixtures)
        assert (report.min_active, report.max_active) == (4, 6)
        assert report.median_active == 5.0
        assert report.mean_active == 5.0
        assert report.size == 2 and report.fraction == 1.0

    def test_singleton_cluster(self):
        assignment = ClusterAssignment((("a", 0),), n_clusters=1)
        records = records_for("a", range(5))
        (report,) = cluster_summary(assignment, records,
                                    trajectory("a", range(5)))
        assert report.min_active == report.max_active == 5
        assert report.median_active == report.mean_active == 5.0

    def test_dominant_roles_thresholded(self):
        assignment = ClusterAssignment((("a", 0),), n_clusters=1)
        records = records_for("a", [0, 1])
        mixtures = [mixture("a", 0, [0.9, 0.1, 0.0]),
                    mixture("a", 1, [0.9, 0.05, 0.05])]
        (report,) = cluster_summary(assignment, records, mixtures,
                                    dominant_role_threshold=0.15)
        assert [k for k, _ in report.dominant_roles] == [0]

    def test_assigned_user_without_records_rejected(self):
        assignment = ClusterAssignment((("ghost", 0),), n_clusters=1)
        with pytest.raises(ValueError):
            cluster_summary(assignment, [], trajectory("ghost", [0]))

    def test_empty_cluster_zero_report(self):
        assignment = ClusterAssignment((("a", 1),), n_clusters=2)
        reports = cluster_summary(assignment, records_for("a", [0]),
                                  trajectory("a", [0]))
        assert reports[0].size == 0


class TestSerialization:
    def test_profile_round_trip(self, tmp_path):
        mixtures = trajectory("a", range(4)) + trajectory("b", range(1, 6))
        matrix = build_profile_matrix(mixtures, 6, 2, eligible_min_quarters=4)
        path = tmp_path / "profiles.csv"
        write_profile_csv(matrix, path)
        loaded = read_profile_csv(path, n_quarters=6, n_roles=2)
        assert loaded.user_ids == matrix.user_ids
        assert np.array_equal(loaded.values, matrix.values)

    def test_factor_files(self, tmp_path):
        model = fit_nmf(np.random.default_rng(0).random((8, 5)), 2, max_iter=10)
        write_factors(model, tmp_path)
        W = np.loadtxt(tmp_path / "W.csv", delimiter=",")
        assert np.array_equal(W, model.W)

    def test_cluster_report_csv_and_json(self, tmp_path):
        assignment = ClusterAssignment((("a", 0), ("b", 0)), n_clusters=1)
        records = records_for("a", range(4)) + records_for("b", range(6))
        mixtures = trajectory("a", range(4)) + trajectory("b", range(6))
        reports = cluster_summary(assignment, records, mixtures)
        write_cluster_report_csv(reports, tmp_path / "report.csv")
        write_cluster_report_json(reports, tmp_path / "report.json")
        header = (tmp_path / "report.csv").read_text().splitlines()[0]
        for column in ("cluster", "size", "fraction", "min_active_quarters",
                       "max_active_quarters", "median_active_quarters",
                       "mean_active_quarters", "dominant_roles"):
            assert column in header
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload[0]["size"] == 2


class TestEstimatorFacade:
    def test_fit_predict(self):
        mixtures = trajectory("a", range(4)) + trajectory("b", range(4))
        matrix = build_profile_matrix(mixtures, 5, 2, eligible_min_quarters=4)
        est = TrajectoryNmf(n_components=2, max_iter=20)
        labels = est.fit_predict(matrix)
        assert labels.shape == (2,)
        assert est.components_.shape == (2, 10)


@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.integers(min_value=2, max_value=6))
@settings(max_examples=25, deadline=None)
def test_nmf_trace_monotone_property(seed, kc):
    M = np.abs(np.random.default_rng(seed).normal(size=(12, 8)))
    if not M.any():
        M[0, 0] = 1.0
    model = fit_nmf(M, kc, max_iter=25, tol=1e-9)
    trace = np.asarray(model.objective_trace)
    assert (np.diff(trace) <= 0).all()
