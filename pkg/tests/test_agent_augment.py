import numpy as np
import pytest
from scipy.stats import chisquare

from probenav.agent import (
    GoalEncoder,
    SAEncoder,
    augment_batch,
    augment_observation,
    augmented_critic_matrix,
    critic_matrix,
    encode_critic_matrix,
)
from probenav import nn

OBS_SIDE = 16
OBS_DIM = OBS_SIDE * OBS_SIDE
H = 6


def test_zero_pad_is_identity():
    rng = np.random.default_rng(0)
    obs = rng.uniform(size=(OBS_SIDE, OBS_SIDE))
    out = augment_observation(obs, rng, pad=0)
    assert np.array_equal(out, obs)
    assert out is not obs


def test_constant_image_shift_invariant():
    rng = np.random.default_rng(1)
    obs = np.full((OBS_SIDE, OBS_SIDE), 0.4)
    for _ in range(20):
        assert np.array_equal(augment_observation(obs, rng, pad=4), obs)


def test_offsets_uniform_chi_square():
    # a centered delta image exposes the drawn offset directly: after padding
    # the delta sits at (16 + pad, 16 + pad), so a crop at offset (r, c)
    # leaves it at (16 + pad - r, 16 + pad - c)
    pad = 4
    side = 2 * pad + 1
    obs = np.zeros((32, 32))
    obs[16, 16] = 1.0
    rng = np.random.default_rng(2)
    counts = np.zeros(side * side)
    for _ in range(10_000):
        out = augment_observation(obs, rng, pad=pad)
        r, c = map(int, np.argwhere(out == 1.0)[0])
        counts[(16 + pad - r) * side + (16 + pad - c)] += 1
    assert counts.sum() == 10_000
    assert chisquare(counts).pvalue > 0.01


def test_seeded_reproducible():
    obs = np.random.default_rng(3).uniform(size=(OBS_SIDE, OBS_SIDE))
    a = augment_observation(obs, np.random.default_rng(7), pad=4)
    b = augment_observation(obs, np.random.default_rng(7), pad=4)
    assert np.array_equal(a, b)


def test_batch_shifts_independent_per_image():
    rng = np.random.default_rng(4)
    batch = rng.uniform(size=(6, OBS_SIDE, OBS_SIDE))
    out = augment_batch(batch, rng, pad=4)
    assert out.shape == batch.shape
    assert not np.array_equal(out, batch)


def _encoders(seed=0):
    sa = SAEncoder(OBS_DIM, 5, H, (8,), np.random.default_rng(seed))
    goal = GoalEncoder(OBS_DIM, H, (8,), np.random.default_rng(seed + 1))
    return sa, goal


def _batch(seed=0, n=4):
    rng = np.random.default_rng(seed)
    return (rng.uniform(size=(n, OBS_SIDE, OBS_SIDE)),
            rng.uniform(-1, 1, (n, 5)),
            rng.uniform(size=(n, OBS_SIDE, OBS_SIDE)))


def test_k1_pad0_equals_plain_matrix():
    sa, goal = _encoders()
    obs, act, goals = _batch()
    q_aug, _ = augmented_critic_matrix(sa, goal, obs, act, goals, k=1, pad=0,
                                       rng=np.random.default_rng(0))
    q_plain, _ = encode_critic_matrix(sa, goal, obs, act, goals)
    np.testing.assert_array_equal(q_aug.data, q_plain.data)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_replayed_rng_matches_mean_of_constituents(k):
    sa, goal = _encoders()
    obs, act, goals = _batch(seed=5)
    pad = 3
    q_aug, _ = augmented_critic_matrix(sa, goal, obs, act, goals, k=k, pad=pad,
                                       rng=np.random.default_rng(42))
    # replay the documented draw order: K observation batches then K goal batches
    rng = np.random.default_rng(42)
    obs_batches = [augment_batch(obs, rng, pad) for _ in range(k)]
    goal_batches = [augment_batch(goals, rng, pad) for _ in range(k)]
    total = np.zeros_like(q_aug.data)
    for ob in obs_batches:
        scaled = sa.encode(ob.reshape(len(ob), -1), act)[1]
        for gb in goal_batches:
            latent = goal.encode(gb.reshape(len(gb), -1))
            total += critic_matrix(scaled, latent).data
    np.testing.assert_allclose(q_aug.data, total / (k * k), atol=1e-12)


def test_gradient_through_average_matches_finite_differences():
    sa, goal = _encoders(seed=9)
    obs, act, goals = _batch(seed=9, n=3)
    params = nn.ParamSet()
    params.merge(sa.params, "sa.")
    params.merge(goal.params, "goal.")

    def loss_fn():
        q_aug, raw = augmented_critic_matrix(sa, goal, obs, act, goals, k=2, pad=2,
                                             rng=np.random.default_rng(11))
        from probenav.agent import infonce_loss
        return infonce_loss(q_aug, l2_coeff=1e-3, raw_sa=raw)

    report = nn.grad_check(loss_fn, params, tolerance=1e-4)
    assert report.passed, str(report)
