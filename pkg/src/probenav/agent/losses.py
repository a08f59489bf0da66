"""Critic similarity matrix, symmetric InfoNCE, augmented variant, actor loss."""

from __future__ import annotations

import numpy as np

from ..nn import Tensor
from ..nn import autodiff as ad
from .augment import augment_batch
from .encoders import GoalEncoder, SAEncoder
from .policy import GaussianPolicy


def critic_matrix(sa_scaled: Tensor, goal_latent: Tensor) -> Tensor:
    """Q[i, j] = <phi(o_i, a_i) / T, psi(g_j)>; diagonal holds the positives."""
    n = sa_scaled.data.shape[0]
    if n < 2:
        raise ValueError(f"contrastive matrix needs a batch of >= 2, got {n}")
    if goal_latent.data.shape[0] != n:
        raise ad.ShapeError("state-action and goal batches differ in size")
    return ad.matmul(sa_scaled, ad.transpose(goal_latent))


def infonce_loss(q: Tensor, l2_coeff: float = 0.0, raw_sa: Tensor | None = None) -> Tensor:
    """Symmetric softmax cross-entropy with diagonal labels.

    Rows classify each state-action against all goals, columns each goal
    against all state-actions; the two are averaged with weight 1/2. The
    optional regularizer penalizes the mean squared norm of the raw
    (pre-temperature) state-action representations.
    """
    n, m = q.data.shape
    if n != m:
        raise ad.ShapeError(f"logits matrix must be square, got {q.shape}")
    labels = np.arange(n)
    loss = 0.5 * (ad.cross_entropy_with_index_labels(q, labels)
                  + ad.cross_entropy_with_index_labels(ad.transpose(q), labels))
    if l2_coeff > 0.0:
        if raw_sa is None:
            raise ValueError("l2 regularization needs the raw state-action latents")
        loss = loss + l2_coeff * raw_sa.square().sum(axis=1).mean()
    return loss


def encode_critic_matrix(sa_encoder: SAEncoder, goal_encoder: GoalEncoder,
                         obs: np.ndarray, actions: np.ndarray, goals: np.ndarray,
                         frozen: bool = False) -> tuple[Tensor, Tensor]:
    """(Q matrix, raw state-action latents) for flat (N, ...) batch arrays."""
    raw, scaled = sa_encoder.encode(obs.reshape(len(obs), -1), actions, frozen=frozen)
    goal_latent = goal_encoder.encode(goals.reshape(len(goals), -1), frozen=frozen)
    return critic_matrix(scaled, goal_latent), raw


def augmented_critic_matrix(sa_encoder: SAEncoder, goal_encoder: GoalEncoder,
                            obs: np.ndarray, actions: np.ndarray, goals: np.ndarray,
                            k: int, pad: int, rng: np.random.Generator,
                            frozen: bool = False) -> tuple[Tensor, Tensor]:
    """Mean of the K^2 critic matrices over K random shifts of obs and goals.

    Draw order is fixed and replayable: K augmented observation batches
    first, then K augmented goal batches. Returns (Q_aug, raw latents of all
    K augmented state-action batches stacked to (K*N, H)).
    """
    if k < 1:
        raise ValueError("need at least one augmentation draw")
    if obs.ndim != 3 or goals.ndim != 3:
        raise ad.ShapeError("augmentation needs (N, H, W) image batches")
    n = len(obs)
    obs_batches = [augment_batch(obs, rng, pad) for _ in range(k)]
    goal_batches = [augment_batch(goals, rng, pad) for _ in range(k)]

    # one fused pass: stacking the K copies batch-wise gives the same K^2
    # block matrices with a fraction of the graph overhead
    obs_all = np.concatenate(obs_batches).reshape(k * n, -1)
    act_all = np.tile(np.asarray(actions, dtype=np.float64), (k, 1))
    goal_all = np.concatenate(goal_batches).reshape(k * n, -1)
    raw, scaled = sa_encoder.encode(obs_all, act_all, frozen=frozen)
    latent = goal_encoder.encode(goal_all, frozen=frozen)
    big = critic_matrix(scaled, latent)
    blocks = ad.reshape(big, (k, n, k, n))
    q_aug = blocks.mean(axis=0).mean(axis=1)
    return q_aug, raw


def diagonal_accuracy(q_values: np.ndarray) -> float:
    """Fraction of rows whose argmax lands on the diagonal."""
    return float(np.mean(np.argmax(q_values, axis=1) == np.arange(len(q_values))))


def actor_loss(policy: GaussianPolicy, sa_encoder: SAEncoder,
               goal_encoder: GoalEncoder, obs: np.ndarray, goals: np.ndarray,
               noise: np.ndarray) -> Tensor:
    """-mean_i f(o_i, pi(o_i, g_i), g_i) with the critic frozen.

    Gradients reach only the policy: the critic networks run with detached
    weights, so their parameter gradients stay exactly zero.
    """
    flat_obs = obs.reshape(len(obs), -1)
    flat_goals = goals.reshape(len(goals), -1)
    actions, _ = policy.action_tensor(flat_obs, flat_goals, noise=noise)
    _, scaled = sa_encoder.encode(flat_obs, actions, frozen=True)
    goal_latent = goal_encoder.encode(flat_goals, frozen=True)
    pairwise = (scaled * goal_latent).sum(axis=1)
    return -pairwise.mean()
