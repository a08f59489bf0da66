"""State-action and goal encoders for the contrastive critic.

The state-action encoder maps (observation, action) to an H-dimensional
latent and divides it by a positive temperature (a softplus-parameterized
scalar, learnable by default). The goal encoder maps an observation to an
L2-normalized H-dimensional latent; normalizing the goal side is what keeps
critic training stable.
"""

from __future__ import annotations

import numpy as np

from ..nn import MLP, ParamSet, Tensor
from ..nn import autodiff as ad


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


class SAEncoder:
    """phi: (observation, action) -> latent / temperature."""

    def __init__(self, obs_dim: int, action_dim: int, latent_dim: int,
                 hidden: tuple, rng: np.random.Generator, activation: str = "tanh",
                 temperature_init: float = 1.0, temperature_learnable: bool = True):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.latent_dim = latent_dim
        self.net = MLP("sa_enc", [obs_dim + action_dim, *hidden, latent_dim], rng,
                       activation=activation)
        self.temperature_learnable = temperature_learnable
        self.params = ParamSet()
        self.params.merge(self.net.params)
        self.params.add("temp_raw", Tensor(np.array([_softplus_inverse(temperature_init)])))

    def temperature(self, frozen: bool = False) -> Tensor:
        raw = self.params["temp_raw"]
        if frozen or not self.temperature_learnable:
            raw = raw.detach()
        return ad.softplus(raw)

    def encode(self, obs, action, frozen: bool = False) -> tuple[Tensor, Tensor]:
        """Returns (raw latent, temperature-scaled latent), both (N, H)."""
        obs_t, act_t = _as_tensor(obs), _as_tensor(action)
        if obs_t.data.ndim != 2 or obs_t.data.shape[1] != self.obs_dim:
            raise ad.ShapeError(f"sa encoder expects (*, {self.obs_dim}) observations, "
                                f"got {obs_t.shape}")
        raw = self.net(ad.concat([obs_t, act_t], axis=1), frozen=frozen)
        scaled = raw / self.temperature(frozen=frozen)
        return raw, scaled


class GoalEncoder:
    """psi: observation -> unit-norm latent."""

    def __init__(self, obs_dim: int, latent_dim: int, hidden: tuple,
                 rng: np.random.Generator, activation: str = "tanh"):
        self.obs_dim = obs_dim
        self.latent_dim = latent_dim
        self.net = MLP("goal_enc", [obs_dim, *hidden, latent_dim], rng,
                       activation=activation)
        self.params = self.net.params

    def encode(self, obs, frozen: bool = False) -> Tensor:
        obs_t = _as_tensor(obs)
        if obs_t.data.ndim != 2 or obs_t.data.shape[1] != self.obs_dim:
            raise ad.ShapeError(f"goal encoder expects (*, {self.obs_dim}) observations, "
                                f"got {obs_t.shape}")
        raw = self.net(obs_t, frozen=frozen)
        norms = raw.square().sum(axis=1, keepdims=True)
        if np.any(norms.data < 1e-24):
            raise ValueError("goal encoding collapsed to zero norm")
        return raw / ad.sqrt(norms)
