import numpy as np
import pytest

from probenav import nn
from probenav.agent import critic_matrix, diagonal_accuracy, infonce_loss
from probenav.nn import Tensor


def brute_force_infonce(q: np.ndarray) -> float:
    """Independent double-loop symmetric softmax cross-entropy oracle."""
    n = len(q)

    def ce(mat):
        total = 0.0
        for i in range(n):
            total += -(mat[i, i] - np.log(np.sum(np.exp(mat[i]))))
        return total / n

    return 0.5 * (ce(q) + ce(q.T))


def test_hand_computed_two_by_two():
    q = Tensor([[2.0, 0.0], [0.0, 2.0]])
    loss = infonce_loss(q)
    assert loss.item() == pytest.approx(np.log(1.0 + np.exp(-2.0)), abs=1e-12)
    assert loss.item() == pytest.approx(0.126928, abs=1e-6)


def test_uniform_matrix_gives_log_n():
    q = Tensor(np.full((4, 4), 0.37))
    assert infonce_loss(q).item() == pytest.approx(np.log(4.0), abs=1e-12)


def test_monotone_decreasing_in_diagonal_margin():
    rng = np.random.default_rng(0)
    off = rng.normal(size=(5, 5))
    np.fill_diagonal(off, 0.0)
    losses = []
    for margin in np.linspace(0.0, 10.0, 21):
        q = off + np.diag(np.full(5, margin))
        losses.append(infonce_loss(Tensor(q)).item())
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_matches_brute_force_on_random_matrices():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        q = rng.normal(scale=2.0, size=(n, n))
        assert infonce_loss(Tensor(q)).item() == pytest.approx(
            brute_force_infonce(q), abs=1e-10)


def test_l2_term_added_exactly():
    rng = np.random.default_rng(2)
    q = rng.normal(size=(3, 3))
    raw = rng.normal(size=(3, 7))
    lam = 1e-2
    with_reg = infonce_loss(Tensor(q), l2_coeff=lam, raw_sa=Tensor(raw)).item()
    base = infonce_loss(Tensor(q)).item()
    assert with_reg - base == pytest.approx(lam * np.mean(np.sum(raw ** 2, axis=1)),
                                            abs=1e-12)


def test_l2_requires_raw_latents():
    with pytest.raises(ValueError, match="raw"):
        infonce_loss(Tensor(np.zeros((2, 2))), l2_coeff=0.1, raw_sa=None)


def test_non_square_rejected():
    with pytest.raises(nn.ShapeError):
        infonce_loss(Tensor(np.zeros((2, 3))))


def test_orthonormal_latents_give_identity_matrix():
    eye = np.eye(4)
    q = critic_matrix(Tensor(eye), Tensor(eye))
    np.testing.assert_array_equal(q.data, eye)


def test_identical_goal_latents_give_identical_columns():
    rng = np.random.default_rng(3)
    sa = rng.normal(size=(4, 6))
    g = np.tile(rng.normal(size=(1, 6)), (4, 1))
    q = critic_matrix(Tensor(sa), Tensor(g)).data
    for j in range(1, 4):
        np.testing.assert_allclose(q[:, j], q[:, 0], atol=1e-15)


def test_matrix_matches_double_loop():
    rng = np.random.default_rng(4)
    sa = rng.normal(size=(5, 8))
    g = rng.normal(size=(5, 8))
    q = critic_matrix(Tensor(sa), Tensor(g)).data
    manual = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            manual[i, j] = float(np.dot(sa[i], g[j]))
    np.testing.assert_allclose(q, manual, atol=1e-12)


def test_single_row_batch_rejected():
    with pytest.raises(ValueError, match=">= 2"):
        critic_matrix(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4))))


def test_diagonal_accuracy():
    q = np.array([[3.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 0.0, 5.0]])
    assert diagonal_accuracy(q) == pytest.approx(2.0 / 3.0)
