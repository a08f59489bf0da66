import numpy as np
import pytest
from scipy.stats import chisquare

from probenav.replay import (
    ReplayBuffer,
    SamplingError,
    Trajectory,
    TrajectoryError,
    sample_future_goal,
    sample_goal_offset,
    write_batch_debug_csv,
)


def make_traj(patient_id=0, n=10, seed=0, with_goal=True):
    rng = np.random.default_rng(seed)
    return Trajectory(
        patient_id=patient_id,
        observations=rng.uniform(size=(n + 1, 8, 8)),
        actions=rng.uniform(-1, 1, (n, 5)),
        goal_obs=rng.uniform(size=(8, 8)) if with_goal else None,
    )


def test_append_to_empty():
    buf = ReplayBuffer(capacity=4)
    buf.append(make_traj())
    assert len(buf) == 1


def test_ring_evicts_oldest():
    buf = ReplayBuffer(capacity=3)
    uids = [buf.append(make_traj(patient_id=i, seed=i)) for i in range(4)]
    assert len(buf) == 3
    store, _ = buf.snapshot()
    assert [tr.uid for tr in store] == uids[1:]
    assert uids[0] not in {tr.uid for tr in store}


def test_patient_index_matches_brute_force_scan():
    buf = ReplayBuffer(capacity=5)
    for i, pid in enumerate([3, 1, 3, 2, 1, 3]):  # one eviction at the end
        buf.append(make_traj(patient_id=pid, seed=i))
    store, by_patient = buf.snapshot()
    expected = {}
    for tr in store:
        expected.setdefault(tr.patient_id, []).append(tr.uid)
    assert {pid: [t.uid for t in ts] for pid, ts in by_patient.items()} == expected
    assert buf.patients() == sorted(expected)


def test_malformed_trajectory_rejected():
    bad = make_traj()
    bad.actions = bad.actions[:-2]
    with pytest.raises(TrajectoryError):
        ReplayBuffer().append(bad)


def test_gamma_zero_always_next_step():
    rng = np.random.default_rng(0)
    traj = make_traj(n=10)
    assert all(sample_future_goal(traj, 4, 0.0, rng) == 5 for _ in range(100))


def test_last_timestep_has_no_future():
    traj = make_traj(n=6)
    with pytest.raises(SamplingError):
        sample_future_goal(traj, 6, 0.9, np.random.default_rng(0))


def test_geometric_mean_matches_analytic():
    rng = np.random.default_rng(1)
    draws = np.array([sample_goal_offset(0.9, rng) for _ in range(100_000)])
    assert draws.mean() == pytest.approx(10.0, abs=0.1)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_geometric_distribution_chi_square(gamma):
    rng = np.random.default_rng(2)
    n_draws = 100_000
    draws = np.array([sample_goal_offset(gamma, rng) for _ in range(n_draws)])
    p = 1.0 - gamma
    # bin the support, folding the tail into the last cell
    kmax = 1
    while (1 - gamma ** kmax) < 0.999:
        kmax += 1
    observed = np.zeros(kmax + 1)
    for d in draws:
        observed[min(d, kmax + 1) - 1] += 1
    expected = np.array([p * gamma ** (k - 1) for k in range(1, kmax + 1)]
                        + [gamma ** kmax]) * n_draws
    assert chisquare(observed, expected).pvalue > 0.01


def test_clamped_goal_near_trajectory_end():
    # t = n-2 leaves T in {n-1, n}; the geometric tail mass concentrates at n:
    # P(T = n-1) = 1 - gamma, everything else clamps.
    gamma = 0.9
    traj = make_traj(n=12)
    rng = np.random.default_rng(3)
    draws = np.array([sample_future_goal(traj, 10, gamma, rng) for _ in range(20_000)])
    assert set(draws) == {11, 12}
    frac_unclamped = np.mean(draws == 11)
    assert frac_unclamped == pytest.approx(1.0 - gamma, abs=0.01)
    assert np.mean(draws == 12) > 0.8


def test_cpb_composition_exact():
    buf = ReplayBuffer()
    for pid in range(4):
        for k in range(3):
            buf.append(make_traj(patient_id=pid, seed=pid * 10 + k))
    rng = np.random.default_rng(4)
    batch = buf.sample_cpb_batch(8, 2, 0.9, rng)
    counts = dict(zip(*np.unique(batch.patient_ids, return_counts=True)))
    assert len(counts) == 2
    assert all(c == 4 for c in counts.values())


def test_cpb_single_patient_mode():
    buf = ReplayBuffer()
    for pid in range(3):
        buf.append(make_traj(patient_id=pid, seed=pid))
    batch = buf.sample_cpb_batch(6, 1, 0.9, np.random.default_rng(5))
    assert len(set(batch.patient_ids)) == 1


def test_cpb_uniform_over_patient_pairs():
    # 10 patients, P=2: every unordered pair should appear ~uniformly (1/45)
    buf = ReplayBuffer()
    for pid in range(10):
        buf.append(make_traj(patient_id=pid, seed=pid))
    rng = np.random.default_rng(6)
    n_batches = 10_000
    counts = {}
    for _ in range(n_batches):
        batch = buf.sample_cpb_batch(4, 2, 0.9, rng)
        pair = tuple(sorted(set(batch.patient_ids.tolist())))
        counts[pair] = counts.get(pair, 0) + 1
    assert len(counts) == 45
    expectation = n_batches / 45.0
    sigma = np.sqrt(n_batches * (1 / 45) * (44 / 45))
    observed = np.array([counts[p] for p in sorted(counts)])
    assert chisquare(observed).pvalue > 0.01
    # per-pair 3-sigma band; with 45 simultaneous cells allow one tail miss
    outside = sum(abs(c - expectation) > 3 * sigma for c in observed)
    assert outside <= 1


def test_cpb_requires_enough_patients():
    buf = ReplayBuffer()
    buf.append(make_traj(patient_id=0))
    with pytest.raises(SamplingError, match="distinct patients"):
        buf.sample_cpb_batch(4, 2, 0.9, np.random.default_rng(0))


def test_cpb_requires_divisible_batch():
    buf = ReplayBuffer()
    for pid in range(3):
        buf.append(make_traj(patient_id=pid, seed=pid))
    with pytest.raises(SamplingError, match="divisible"):
        buf.sample_cpb_batch(8, 3, 0.9, np.random.default_rng(0))


def test_random_mode_ignores_patient_tags():
    buf = ReplayBuffer()
    for pid in range(5):
        buf.append(make_traj(patient_id=pid, seed=pid))
    batch = buf.sample_cpb_batch(64, ReplayBuffer.RANDOM_PATIENTS, 0.9,
                                 np.random.default_rng(7))
    assert len(set(batch.patient_ids)) > 2  # no N/P structure imposed


def test_positive_goal_causality():
    buf = ReplayBuffer()
    for pid in range(4):
        buf.append(make_traj(patient_id=pid, seed=pid, n=15))
    rng = np.random.default_rng(8)
    for _ in range(50):
        batch = buf.sample_cpb_batch(8, 2, 0.95, rng)
        assert np.all(batch.goal_t > batch.t)
        assert np.all(batch.goal_t <= 15)
        assert np.all(batch.is_positive)


def test_sampling_deterministic_with_seed():
    buf = ReplayBuffer()
    for pid in range(4):
        buf.append(make_traj(patient_id=pid, seed=pid))
    a = buf.sample_cpb_batch(8, 2, 0.9, np.random.default_rng(9))
    b = buf.sample_cpb_batch(8, 2, 0.9, np.random.default_rng(9))
    assert np.array_equal(a.obs, b.obs)
    assert np.array_equal(a.traj_uids, b.traj_uids)
    assert np.array_equal(a.goal_t, b.goal_t)


def test_actor_goals_avoid_own_trajectory():
    buf = ReplayBuffer()
    for pid in range(4):
        buf.append(make_traj(patient_id=pid, seed=pid))
    store, _ = buf.snapshot()
    rng = np.random.default_rng(10)
    goal_lookup = {tr.uid: tr.goal_obs for tr in store}
    uids = np.array([store[0].uid] * 16)
    goals = buf.sample_actor_goals(uids, rng)
    own = goal_lookup[store[0].uid]
    for g in goals:
        assert not np.array_equal(g, own)


def test_batch_debug_csv(tmp_path):
    buf = ReplayBuffer()
    for pid in range(2):
        buf.append(make_traj(patient_id=pid, seed=pid))
    batch = buf.sample_cpb_batch(4, 2, 0.9, np.random.default_rng(11))
    path = tmp_path / "batch.csv"
    write_batch_debug_csv(batch, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "entry,patient_id,traj_uid,t,goal_t,is_positive"
    assert len(lines) == 5


def test_trace_dump_round_trip_header(tmp_path):
    import struct
    buf = ReplayBuffer()
    for pid in range(3):
        buf.append(make_traj(patient_id=pid, seed=pid, n=4))
    path = tmp_path / "trace.bin"
    buf.dump_trace(path)
    raw = path.read_bytes()
    assert raw[:4] == b"PNTR"
    version, count = struct.unpack_from("<II", raw, 4)
    assert version == 1 and count == 3
    pid0, uid0, n0, h0, w0 = struct.unpack_from("<qqIII", raw, 12)
    assert (pid0, n0, h0, w0) == (0, 4, 8, 8)
