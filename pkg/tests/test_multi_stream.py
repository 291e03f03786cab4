import itertools

import numpy as np
import pytest

from cemimo import multi_stream as ms
from cemimo import single_stream as ss
from cemimo.annulus import annulus_of, is_constellation_feasible
from cemimo.ce_phase import solve_phases
from cemimo.constellation import make_qam, ml_detect_many
from cemimo.core import SystemConfig, cscg, make_rng, numerical_rank, sample_rayleigh_channel

QAM16 = make_qam(16)
TAU16 = QAM16.tau
FAST = ss.RandomizationConfig(l_u=10, l_p=10, seed=0)


def _rayleigh(m_t, m_r, seed, trial=0):
    return sample_rayleigh_channel(SystemConfig(m_t, m_r), seed, (trial,))


def _brute_partitions(m_t, k):
    """Set partitions into equal groups, by filtering all label assignments."""
    m = m_t // k
    seen = set()
    for labels in itertools.product(range(k), repeat=m_t):
        if any(labels.count(j) != m for j in range(k)):
            continue
        groups = tuple(sorted(tuple(i for i in range(m_t) if labels[i] == j) for j in range(k)))
        seen.add(groups)
    return seen


class TestGroupingPlan:
    @pytest.mark.parametrize("m_t,k,count", [(4, 2, 3), (8, 2, 35), (8, 4, 105), (6, 3, 15), (4, 1, 1)])
    def test_counts(self, m_t, k, count):
        plans = list(ms.enumerate_partitions(m_t, k))
        assert ms.partition_count(m_t, k) == len(plans) == count
        assert len({p.groups for p in plans}) == count

    @pytest.mark.parametrize("m_t,k", [(4, 2), (6, 2), (6, 3), (8, 4)])
    def test_enumeration_matches_brute_force(self, m_t, k):
        plans = [p.groups for p in ms.enumerate_partitions(m_t, k)]
        assert set(plans) == _brute_partitions(m_t, k)
        assert plans == sorted(plans)

    @pytest.mark.parametrize("groups", [((0, 1), (1, 2)), ((0,), (1, 2)), ((0, 1), (3, 4)), ()])
    def test_invalid(self, groups):
        with pytest.raises(ValueError):
            ms.GroupingPlan(2, groups)

    def test_index_grouping(self):
        assert ms.index_grouping(8, 4).groups == ((0, 1), (2, 3), (4, 5), (6, 7))
        with pytest.raises(ValueError):
            ms.index_grouping(6, 4)

    def test_sampled_plans(self):
        plans = ms.sample_partitions(12, 2, 50, seed=3)
        assert ms.index_grouping(12, 2) in plans
        assert len(plans) == len({p.groups for p in plans}) > 10
        assert [p.groups for p in plans] == sorted(p.groups for p in plans)
        assert plans == ms.sample_partitions(12, 2, 50, seed=3)


class TestSplit:
    def test_index_split(self):
        h = np.arange(8.0).reshape(2, 4)
        hk, hm = ms.split_channel(h, ms.index_grouping(4, 2), 0)
        assert np.array_equal(hk, h[:, :2]) and np.array_equal(hm, h[:, 2:])

    def test_pairs(self):
        h = np.arange(16.0).reshape(2, 8)
        plan = ms.index_grouping(8, 4)
        for k in range(4):
            hk, hm = ms.split_channel(h, plan, k)
            assert hk.shape == (2, 2) and hm.shape == (2, 6)

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((3, 6))
        for plan in ms.enumerate_partitions(6, 3):
            for k in range(3):
                hk, hm = ms.split_channel(h, plan, k)
                both = np.hstack([hk, hm])
                assert sorted(map(tuple, both.T)) == sorted(map(tuple, h.T))

    def test_interference_in_group_order(self):
        h = np.arange(6.0)[None, :]
        plan = ms.GroupingPlan(3, ((0, 5), (1, 4), (2, 3)))
        _, hm = ms.split_channel(h, plan, 1)
        assert list(hm[0]) == [0.0, 5.0, 2.0, 3.0]

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ms.split_channel(np.ones((2, 6)), ms.index_grouping(4, 2), 0)
        with pytest.raises(ValueError):
            ms.split_channel(np.ones((2, 4)), ms.index_grouping(4, 2), 2)

    def test_active_subchannel(self):
        h = np.arange(8.0).reshape(2, 4)
        assert np.array_equal(ms.active_subchannel(h, [3, 1]), h[:, [1, 3]])
        with pytest.raises(ValueError):
            ms.active_subchannel(h, [4])


class TestMmsePieces:
    def test_noise_scale(self):
        assert ms.mmse_noise_scale(0.5, 2.0, 2) == pytest.approx(0.5, abs=1e-15)
        with pytest.raises(ValueError):
            ms.mmse_noise_scale(1.0, 1.0, 1)

    def test_charnes_cooper(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            h = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            hk, hm = h[:, :2], h[:, 2:]
            u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            u /= np.linalg.norm(u)
            st_ = rng.uniform(0.05, 3)
            v, t = ms.charnes_cooper(u, hm, st_)
            interference = np.sum(np.abs(ss.effective_row(v, hm)) ** 2)
            assert interference + t * st_ ** 2 == pytest.approx(1.0, abs=1e-12)
            assert ss.l1_objective(v, hk) == pytest.approx(ms.sinr_ratio(u, hk, hm, st_), abs=1e-8)
            assert np.allclose(ms.from_lifted_scale(v, hm, st_), u, atol=1e-10)

    def test_relaxation_dominates_rescaled_points(self):
        h = _rayleigh(4, 4, 2)
        plan = ms.index_grouping(4, 2)
        hk, hm = ms.split_channel(h, plan, 0)
        st_ = 0.7
        _, sol = ss.solve_lifted(ms.build_p6_sdr(hk, hm, TAU16, st_))
        bound = max(sol.objective, sol.dual_objective)
        rng = np.random.default_rng(3)
        found = 0
        while found < 100:
            u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
            u /= np.linalg.norm(u)
            if not ss.is_feasible(u, hk, TAU16, rtol=0.0):
                continue
            v, _ = ms.charnes_cooper(u, hm, st_)
            assert ss.l1_objective(v, hk) <= bound + 1e-6
            found += 1

    def test_whitened_relaxation_matches_exact_form(self):
        h = _rayleigh(4, 4, 4)
        hk, hm = ms.split_channel(h, ms.index_grouping(4, 2), 1)
        for st_ in (0.1, 1.0, 5.0):
            _, exact = ss.solve_lifted(ms.build_p6_sdr(hk, hm, TAU16, st_))
            m = ms.whitening(hm, st_, 4)
            assert np.allclose(m.conj().T @ (st_ ** 2 * np.eye(4) + hm @ hm.conj().T) @ m, np.eye(4), atol=1e-10)
            _, white = ss.solve_lifted(ss.build_p3_sdr(m.conj().T @ hk, TAU16))
            assert white.objective == pytest.approx(exact.objective, rel=1e-5)

    def test_large_noise_limit(self):
        h = _rayleigh(4, 4, 5)
        hk, _ = ms.split_channel(h, ms.index_grouping(4, 2), 0)
        _, p3 = ss.solve_lifted(ss.build_p3_sdr(hk, TAU16))
        for st_ in (30.0, 1e3):
            # interference becomes negligible: the value tends to the single-stream value over st
            sol = ms.solve_mmse_receiver(h, ms.index_grouping(4, 2), 0, TAU16, st_, FAST)
            assert sol.sdr_upper_bound * st_ == pytest.approx(p3.objective, rel=0.01)

    def test_zero_interference_budget(self):
        hk = _rayleigh(2, 3, 6)
        prog = ms.build_p6_sdr(hk, np.zeros((3, 2)), TAU16, 0.5)
        w = prog.layout["W"]
        row = prog.blocks[0].f[0]
        # sigma^2 tr(W) <= 1 + n sigma^2, normalized to a unit right-hand side
        expected = -w.trace_coeffs(0.25 * np.eye(5) / (1 + 2 * 0.25), prog.n).real
        assert np.allclose(row, expected, atol=1e-15)

    def test_ser_bound_special_cases(self):
        h = np.zeros((2, 4), dtype=complex)
        h[0, :2] = [1.0, 0.5]
        h[1, 2:] = [1.0, 1.0]
        plan = ms.index_grouping(4, 2)
        u = np.array([1.0, 0.0])
        alpha = np.sqrt(1.0 / 4) * 1.5
        bound = ms.mmse_ser_bound(u, h, plan, 0, 1.0, 0.1, QAM16)
        assert bound == pytest.approx(ss.ser_union_bound(alpha * QAM16.d_min, np.sqrt(0.1), 16), rel=1e-12)
        assert ms.mmse_ser_bound(np.array([0.0, 1.0]), h, plan, 0, 1.0, 0.1, QAM16) == 7.5

    def test_ser_bound_above_gaussianized_monte_carlo(self):
        h = _rayleigh(4, 4, 7)
        plan = ms.index_grouping(4, 2)
        hk, hm = ms.split_channel(h, plan, 0)
        u = ss.feasible_solution(hk)
        power, noise_var = 1.0, 0.05
        alpha = np.sqrt(power / 4) * ss.l1_objective(u, hk)
        var = power / 2 * np.sum(np.abs(ss.effective_row(u, hm)) ** 2) + noise_var
        rng = make_rng(0, 99)
        n = 100_000
        idx = rng.integers(0, 16, n)
        y = alpha * QAM16.points[idx] + np.sqrt(var) * cscg(rng, n)
        ser = np.mean(ml_detect_many(y, alpha, QAM16) != idx)
        bound = ms.mmse_ser_bound(u, h, plan, 0, power, noise_var, QAM16)
        assert 1e-3 < ser
        assert ser <= bound


class TestMmseReceiver:
    def test_requires_group_size(self):
        with pytest.raises(ValueError):
            ms.solve_mmse_receiver(_rayleigh(4, 4, 0), ms.index_grouping(4, 4), 0, TAU16, 1.0)

    def test_zero_interference_reduces_to_single_stream(self):
        for trial in range(5):
            hk = _rayleigh(2, 4, 8, trial)
            h = np.hstack([hk, np.zeros((4, 2))])
            sol = ms.solve_mmse_receiver(h, ms.index_grouping(4, 2), 0, TAU16, 1.0, FAST)
            ref = ss.optimize_receiver(hk, TAU16, FAST)
            assert ss.l1_objective(sol.u, hk) == pytest.approx(ref.objective, abs=1e-4)

    def test_outputs_satisfy_constraints(self):
        for trial in range(1000):
            m_t, k, m_r = [(4, 2, 4), (4, 2, 2), (6, 2, 3), (6, 3, 4)][trial % 4]
            h = _rayleigh(m_t, m_r, 9, trial)
            plan = ms.index_grouping(m_t, k)
            st_ = 10.0 ** (-(trial % 7) / 2)
            j = trial % k
            sol = ms.solve_mmse_receiver(h, plan, j, TAU16, st_, ss.RandomizationConfig(5, 5, trial))
            hk, hm = ms.split_channel(h, plan, j)
            assert np.linalg.norm(sol.u) == pytest.approx(1.0, abs=1e-10)
            assert sol.feasible and ss.is_feasible(sol.u, hk, TAU16)
            v, _ = ms.charnes_cooper(sol.u, hm, st_)
            assert st_ ** 2 * np.vdot(v, v).real + np.sum(np.abs(ss.effective_row(v, hm)) ** 2) <= 1 + 1e-12
            assert sol.objective == pytest.approx(ss.l1_objective(v, hk), abs=1e-8)
            assert sol.objective <= sol.sdr_upper_bound + 1e-6


class TestZf:
    def test_basis_example(self):
        hm = np.zeros((4, 2), dtype=complex)
        hm[0, 0] = hm[1, 1] = 1.0
        v = ms.zf_null_basis(hm).v_tilde
        assert v.shape == (4, 2)
        assert np.allclose(v[:2], 0.0, atol=1e-15)
        assert np.allclose(v.conj().T @ v, np.eye(2), atol=1e-12)

    def test_basis_properties(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            m_r = int(rng.integers(3, 9))
            cols = int(rng.integers(1, m_r))
            hm = rng.standard_normal((m_r, cols)) + 1j * rng.standard_normal((m_r, cols))
            v = ms.zf_null_basis(hm).v_tilde
            assert v.shape[1] == m_r - numerical_rank(hm) == m_r - cols
            assert np.linalg.norm(v.conj().T @ v - np.eye(v.shape[1])) <= 1e-10
            assert np.linalg.norm(v.conj().T @ hm) <= 1e-10 * max(1.0, np.linalg.norm(hm))

    def test_basis_dimension_condition(self):
        with pytest.raises(ValueError):
            ms.zf_null_basis(np.ones((2, 2)))

    def test_precondition(self):
        with pytest.raises(ValueError):
            ms.solve_zf_receiver(_rayleigh(4, 3, 0), ms.index_grouping(4, 2), 0, TAU16)

    def test_zero_forcing_and_feasibility(self):
        for trial in range(500):
            h = _rayleigh(4, 4, 11, trial)
            plan = ms.index_grouping(4, 2)
            for k in range(2):
                sol = ms.solve_zf_receiver(h, plan, k, TAU16, FAST)
                hk, hm = ms.split_channel(h, plan, k)
                assert np.max(np.abs(ss.effective_row(sol.u, hm))) <= 1e-10
                assert np.linalg.norm(sol.u) == pytest.approx(1.0, abs=1e-10)
                assert sol.feasible
                assert is_constellation_feasible(annulus_of(ss.effective_row(sol.u, hk), 0.25), QAM16)

    def test_subchannel_rank_never_drops(self):
        for m_t, k, m_r in [(4, 2, 4), (6, 2, 5), (6, 3, 6), (8, 2, 6), (8, 4, 8)]:
            plans = list(ms.enumerate_partitions(m_t, k))
            draws = 1000 if len(plans) < 50 else 100
            for trial in range(draws):
                h = _rayleigh(m_t, m_r, 12, trial)
                for plan in plans:
                    for j in range(k):
                        assert numerical_rank(ms.zf_subchannel(h, plan, j).h_eff) >= 2

    def test_mmse_dominates_zf(self):
        for trial in range(20):
            h = _rayleigh(4, 4, 13, trial)
            plan = ms.index_grouping(4, 2)
            st_ = 10.0 ** (-(trial % 5) / 2)
            for k in range(2):
                hk, hm = ms.split_channel(h, plan, k)
                zf = ms.solve_zf_receiver(h, plan, k, TAU16, FAST)
                mmse = ms.solve_mmse_receiver(h, plan, k, TAU16, st_, FAST)
                assert mmse.objective >= ms.sinr_ratio(zf.u, hk, hm, st_) - 1e-5


class TestGroupingSearch:
    def test_beats_index_grouping(self):
        for mode, kw in [(ms.ZF, {}), (ms.MMSE, {"sigma_tilde": 0.3})]:
            h = _rayleigh(4, 4, 14)
            plan, sols = ms.grouping_search(h, 2, TAU16, mode, FAST, **kw)
            base = ms.solve_streams(h, ms.index_grouping(4, 2), TAU16, mode, FAST, **kw)
            assert min(s.objective for s in sols) >= min(s.objective for s in base) - 1e-12
            assert len(sols) == 2 and plan.k == 2

    def test_budget(self):
        with pytest.raises(ValueError, match="sampled"):
            ms.grouping_search(_rayleigh(8, 8, 0), 2, TAU16, ms.ZF, FAST, budget=10)

    def test_modes(self):
        h = _rayleigh(4, 4, 15)
        plan, _ = ms.grouping_search(h, 2, TAU16, ms.ZF, FAST, search="index")
        assert plan == ms.index_grouping(4, 2)
        with pytest.raises(ValueError):
            ms.grouping_search(h, 2, TAU16, "other", FAST)
        with pytest.raises(ValueError):
            ms.solve_streams(h, plan, TAU16, ms.MMSE, FAST)


class TestAssembly:
    def test_zero_forcing_outputs_exact(self):
        rng = np.random.default_rng(16)
        for trial in range(20):
            h = _rayleigh(4, 4, 16, trial)
            plan, sols = ms.grouping_search(h, 2, TAU16, ms.ZF, FAST, power=2.0)
            symbols = QAM16.points[rng.integers(0, 16, 2)]
            x = ms.assemble_multistream_transmit(h, plan, sols, symbols, power=2.0)
            assert np.sum(np.abs(x.entries) ** 2) == pytest.approx(2.0, rel=1e-12)
            for k, sol in enumerate(sols):
                assert abs(np.vdot(sol.u, h @ x.entries) - sol.alpha * symbols[k]) <= 1e-9

    def test_mmse_interference_envelope(self):
        rng = np.random.default_rng(17)
        for trial in range(10):
            h = _rayleigh(4, 4, 17, trial)
            plan = ms.index_grouping(4, 2)
            sols = ms.solve_streams(h, plan, TAU16, ms.MMSE, FAST, sigma_tilde=0.5)
            symbols = QAM16.points[rng.integers(0, 16, 2)]
            x = ms.assemble_multistream_transmit(h, plan, sols, symbols)
            for k, sol in enumerate(sols):
                hk, hm = ms.split_channel(h, plan, k)
                own = np.vdot(sol.u, hk @ x.entries[list(plan.groups[k])])
                assert abs(own - sol.alpha * symbols[k]) <= 1e-9
                y = np.vdot(sol.u, h @ x.entries)
                env = np.sqrt(0.5) * np.linalg.norm(ss.effective_row(sol.u, hm))
                assert abs(y - sol.alpha * symbols[k]) <= env + 1e-12

    def test_single_group_matches_single_stream(self):
        h = _rayleigh(4, 4, 18)
        res = ss.optimize_receiver(h, TAU16, FAST)
        plan = ms.GroupingPlan(1, ((0, 1, 2, 3),))
        alpha = 0.5 * res.objective
        sol = ms.StreamSolution(res.u, alpha, res.objective, True)
        s = QAM16.points[5]
        x = ms.assemble_multistream_transmit(h, plan, [sol], [s])
        assert np.allclose(x.phases, solve_phases(ss.effective_row(res.u, h), alpha * s, 0.25, 1e-12))

    def test_phase_failure_names_stream(self):
        h = np.eye(4, dtype=complex)
        plan = ms.index_grouping(4, 2)
        # stream 1 sees columns 2 and 3, which this u cannot observe
        bad = ms.StreamSolution(np.array([1.0, 0, 0, 0]), 1.0, 1.0, False)
        good = ms.StreamSolution(np.array([1.0, 1.0, 0, 0]) / np.sqrt(2), 0.1, 1.0, True)
        with pytest.raises(ms.StreamPhaseError) as err:
            ms.assemble_multistream_transmit(h, plan, [good, bad], [1.0, 0.1])
        assert err.value.stream == 1
