import io
import math

import numpy as np
import pytest

from sbcpe.dynamics import RoundRecord, run
from sbcpe.estimator import EmpiricalTheta, EstimatorError, hoeffding_envelope, marginal_counts
from sbcpe.experiments import replica_seeds
from sbcpe.game import joint_from_index, joint_index
from sbcpe.oracle import epsilon_bound, solve, theta_vector, xi

from conftest import make_game


def record(game, t, joint, unanimous):
    return RoundRecord(t, tuple(joint), joint_index(game, joint), (), (), int(unanimous))


class TestUpdate:
    def test_silent_round(self, g2):
        emp = EmpiricalTheta.for_game(g2).update(record(g2, 1, (0, 1), 0))
        assert emp.t == 1 and emp.counts.sum() == 0

    def test_unanimous_round(self, g2):
        emp = EmpiricalTheta.for_game(g2).update(record(g2, 1, (1, 0), 1))
        assert emp.counts.tolist() == [0, 0, 1, 0]

    def test_out_of_order(self, g2):
        emp = EmpiricalTheta.for_game(g2).update(record(g2, 1, (0, 0), 1))
        with pytest.raises(EstimatorError):
            emp.update(record(g2, 3, (0, 0), 1))
        with pytest.raises(EstimatorError):
            emp.update(record(g2, 1, (0, 0), 1))

    def test_replay_matches_recount(self, g2):
        tr = run(g2, 1000, 1000, 0.5, seed=3, keep_rounds=True)
        emp = EmpiricalTheta.for_game(g2)
        recount = {}
        for rec in tr.rounds(g2):
            emp.update(rec)
            if all(rec.messages):
                recount[rec.joint] = recount.get(rec.joint, 0) + 1
        assert emp.t == 1000
        for k in range(4):
            assert emp.counts[k] == recount.get(joint_from_index(g2, k), 0)
        assert np.array_equal(emp.counts, tr.empirical.counts)

    def test_batch_equals_sequential(self, g2):
        tr = run(g2, 500, 500, 0.5, seed=9, keep_rounds=True)
        seq = EmpiricalTheta.for_game(g2)
        for rec in tr.rounds(g2):
            seq.update(rec)
        batch = EmpiricalTheta.for_game(g2).update_batch(tr.round_joint, tr.round_messages.all(axis=1))
        assert np.array_equal(seq.counts, batch.counts) and seq.t == batch.t


class TestThetaHat:
    def test_values(self, g2):
        emp = EmpiricalTheta(4, np.array([37, 0, 1000, 0]), 1000)
        assert emp.theta_hat(g2, (0, 0)) == 0.037
        assert emp.theta_hat(g2, (0, 1)) == 0
        assert emp.theta_hat(g2, (1, 0)) == 1

    def test_no_rounds(self, g2):
        emp = EmpiricalTheta.for_game(g2)
        for call in (lambda: emp.theta_hat(g2, (0, 0)), lambda: emp.marginal(g2, 0, 0), emp.theta_hat_vector):
            with pytest.raises(EstimatorError):
                call()


class TestMarginal:
    def test_single_agent(self):
        g = make_game((3,), [[0.5, 0.6, 0.7]])
        emp = EmpiricalTheta(3, np.array([4, 0, 9]), 20)
        for a in range(3):
            assert emp.marginal(g, 0, a) == emp.theta_hat(g, (a,))

    def test_partition_identity(self):
        g = make_game((2, 3, 2), np.zeros((3, 12)))
        counts = np.random.default_rng(0).integers(0, 50, 12)
        emp = EmpiricalTheta(12, counts, 1000)
        total = emp.theta_hat_vector().sum()
        for i, c in enumerate(g.action_counts):
            assert sum(emp.marginal(g, i, a) for a in range(c)) == pytest.approx(total, abs=1e-15)

    def test_g2_definition(self, g2):
        tr = run(g2, 2000, 2000, 0.5, seed=5)
        emp = tr.empirical
        expected = (emp.counts[joint_index(g2, (0, 0))] + emp.counts[joint_index(g2, (0, 1))]) / emp.t
        assert emp.marginal(g2, 0, 0) == expected

    def test_counts_bridge_to_agents(self, g2):
        tr = run(g2, 3000, 3000, 0.4, seed=12)
        for i, m in enumerate(marginal_counts(g2, tr.empirical.counts)):
            assert m.tolist() == list(tr.counters[i])
            for a in range(2):
                assert tr.empirical.marginal_count(g2, i, a) == tr.counters[i][a]


class TestSupError:
    def test_exact_theta_gives_zero(self):
        # one agent, one action, utility 0, lambda -1: theta = 0.5^(1-0) = 0.5
        g = make_game((1,), [[0.0]], thresholds=[-1.0])
        assert theta_vector(g, 0.5)[0] == 0.5
        assert EmpiricalTheta(1, np.array([1]), 2).sup_error(g, 0.5) == 0

    def test_single_round(self, g2):
        th = theta_vector(g2, 0.2)
        emp = EmpiricalTheta.for_game(g2).update(record(g2, 1, (0, 1), 1))
        expected = max(1 - th[1], th[0], th[2], th[3])
        assert emp.sup_error(g2, 0.2) == pytest.approx(expected, abs=1e-15)

    def test_concentrates_below_xi(self, g2):
        eps = 0.9 * epsilon_bound(g2, 1.0)
        x = xi(g2, eps, 1.0)
        errs = [run(g2, 10**6, 10**6, eps, s).empirical.sup_error(g2, eps) for s in replica_seeds(1, 5)]
        assert float(np.median(errs)) < x


class TestHoeffding:
    def test_closed_form(self):
        assert hoeffding_envelope(10**4, 0.02, 3) == pytest.approx(6 * math.exp(-8), rel=1e-12)
        assert hoeffding_envelope(10**4, 0.02, 3) == pytest.approx(2.013e-3, rel=1e-3)

    def test_boundary_is_one(self):
        M, x = 3, 0.05
        K = math.log(2 * M) / (2 * x**2)
        assert hoeffding_envelope(K, x, M) == pytest.approx(1.0, rel=1e-12)
        assert hoeffding_envelope(1, x, M) == 1.0

    def test_doubling_squares_exponential(self):
        M, x, K = 2, 0.03, 5000
        ratio1 = hoeffding_envelope(K, x, M) / (2 * M)
        ratio2 = hoeffding_envelope(2 * K, x, M) / (2 * M)
        assert ratio2 == pytest.approx(ratio1**2, rel=1e-12)


def test_merge_adds_counts(g2):
    a = EmpiricalTheta(4, np.array([1, 2, 0, 0]), 10)
    b = EmpiricalTheta(4, np.array([0, 1, 3, 0]), 5)
    m = a.merge(b)
    assert m.counts.tolist() == [1, 3, 3, 0] and m.t == 15
    assert b.merge(a).counts.tolist() == m.counts.tolist()


def test_dump_csv(g2):
    emp = EmpiricalTheta(4, np.array([3, 1, 0, 0]), 10)
    buf = io.StringIO()
    emp.dump_csv(g2, 0.2, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "joint_index,count,theta_hat,theta,abs_error"
    assert len(lines) == 5
    k, c, est, th, err = lines[1].split(",")
    assert (k, c, float(est)) == ("0", "3", 0.3)
    assert float(err) == pytest.approx(abs(0.3 - float(th)), abs=1e-15)


def test_unbiased_over_replicas(g2):
    eps, t, R = 0.5, 1000, 200
    th = theta_vector(g2, eps)
    total = EmpiricalTheta.for_game(g2)
    for s in replica_seeds(77, R):
        total = total.merge(run(g2, t, t, eps, s).empirical)
    mean = total.counts / (R * t)
    tol = 3 * np.sqrt(th * (1 - th) / (R * t))
    assert np.all(np.abs(mean - th) <= tol)
    assert mean[3] == 0  # infeasible joint action is never endorsed
