"""Tanh-squashed Gaussian policy conditioned on (observation, goal)."""

from __future__ import annotations

import numpy as np

from ..nn import Dense, MLP, ParamSet, Tensor, no_grad
from ..nn import autodiff as ad

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class GaussianPolicy:
    """pi: (observation, goal) -> squashed Gaussian over 5 action components.

    The log-std head is soft-bounded into [LOG_STD_MIN, LOG_STD_MAX] with a
    tanh map, keeping it smooth for gradient checks. Sampling uses the
    pathwise construction a = tanh(mean + std * noise), so gradients flow
    through frozen noise.
    """

    def __init__(self, obs_dim: int, action_dim: int, hidden: tuple,
                 rng: np.random.Generator, activation: str = "tanh"):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        trunk_dims = [2 * obs_dim, *hidden]
        self.trunk = MLP("policy", trunk_dims, rng, activation=activation)
        self.mean_head = Dense("policy.mean", trunk_dims[-1], action_dim, rng)
        self.log_std_head = Dense("policy.log_std", trunk_dims[-1], action_dim, rng)
        self.params = ParamSet()
        self.params.merge(self.trunk.params, "trunk.")
        self.params.merge(self.mean_head.params, "mean.")
        self.params.merge(self.log_std_head.params, "log_std.")

    def _heads(self, obs, goal, frozen: bool = False) -> tuple[Tensor, Tensor]:
        x = ad.concat([_as_tensor(obs), _as_tensor(goal)], axis=1)
        h = ad.tanh(self.trunk(x, frozen=frozen))
        mean = self.mean_head(h, frozen=frozen)
        raw = self.log_std_head(h, frozen=frozen)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (ad.tanh(raw) + 1.0)
        return mean, log_std

    def action_tensor(self, obs, goal, noise=None, frozen: bool = False) -> tuple[Tensor, Tensor]:
        """(squashed action, pre-squash value) with graph recording.

        ``noise`` is a fixed standard-normal array (reparameterization);
        ``None`` means deterministic mode, i.e. tanh(mean).
        """
        mean, log_std = self._heads(obs, goal, frozen=frozen)
        if noise is None:
            pre = mean
        else:
            pre = mean + ad.exp(log_std) * Tensor(np.asarray(noise, dtype=np.float64))
        return ad.tanh(pre), pre

    def _heads_fast(self, obs: np.ndarray, goal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Graph-free forward with the same operation order as ``_heads``."""
        x = np.concatenate([obs, goal], axis=1)
        for step in self.trunk._plan:
            if step == "act":
                x = np.tanh(x)
            else:
                x = x @ step.params["w"].data + step.params["b"].data
        h = np.tanh(x)
        mean = h @ self.mean_head.params["w"].data + self.mean_head.params["b"].data
        raw = h @ self.log_std_head.params["w"].data + self.log_std_head.params["b"].data
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)
        return mean, log_std

    def sample(self, obs, goal, rng: np.random.Generator | None = None,
               deterministic: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Inference-mode sampling: (action, pre-squash), both (N, 5) arrays."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        goal = np.atleast_2d(np.asarray(goal, dtype=np.float64))
        mean, log_std = self._heads_fast(obs, goal)
        if deterministic:
            pre = mean
        else:
            if rng is None:
                raise ValueError("stochastic sampling needs an rng")
            noise = rng.standard_normal((obs.shape[0], self.action_dim))
            pre = mean + np.exp(log_std) * noise
        return np.tanh(pre), pre

    def act(self, obs, goal, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        """Single-step convenience: flat observation/goal in, (5,) action out."""
        action, _ = self.sample(obs.reshape(1, -1), goal.reshape(1, -1), rng,
                                deterministic)
        return action[0]
