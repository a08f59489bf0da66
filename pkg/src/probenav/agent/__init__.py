"""Contrastive critic, goal encoder, squashed-Gaussian actor, and losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import ParamSet
from .augment import augment_batch, augment_observation
from .encoders import GoalEncoder, SAEncoder
from .losses import (
    actor_loss,
    augmented_critic_matrix,
    critic_matrix,
    diagonal_accuracy,
    encode_critic_matrix,
    infonce_loss,
)
from .policy import GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN

ACTION_DIM = 5


@dataclass(frozen=True)
class AgentConfig:
    latent_dim: int = 64
    hidden: tuple = (64,)
    activation: str = "tanh"
    temperature_init: float = 1.0
    temperature_learnable: bool = True
    l2_coeff: float = 1e-4
    augment_k: int = 2
    shift_pad: int = 4


@dataclass
class CrlAgent:
    """The three networks plus their two optimizer-facing parameter groups."""

    sa_encoder: SAEncoder
    goal_encoder: GoalEncoder
    policy: GaussianPolicy
    config: AgentConfig
    critic_params: ParamSet = field(init=False)
    actor_params: ParamSet = field(init=False)

    def __post_init__(self):
        self.critic_params = ParamSet()
        self.critic_params.merge(self.sa_encoder.params, "sa.")
        self.critic_params.merge(self.goal_encoder.params, "goal.")
        self.actor_params = ParamSet()
        self.actor_params.merge(self.policy.params, "pi.")

    @classmethod
    def build(cls, obs_dim: int, config: AgentConfig, rng: np.random.Generator) -> "CrlAgent":
        sa = SAEncoder(obs_dim, ACTION_DIM, config.latent_dim, config.hidden, rng,
                       activation=config.activation,
                       temperature_init=config.temperature_init,
                       temperature_learnable=config.temperature_learnable)
        goal = GoalEncoder(obs_dim, config.latent_dim, config.hidden, rng,
                           activation=config.activation)
        policy = GaussianPolicy(obs_dim, ACTION_DIM, config.hidden, rng,
                                activation=config.activation)
        return cls(sa_encoder=sa, goal_encoder=goal, policy=policy, config=config)

    def act(self, obs: np.ndarray, goal: np.ndarray,
            rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        return self.policy.act(obs.reshape(-1), goal.reshape(-1), rng, deterministic)


__all__ = [
    "ACTION_DIM",
    "AgentConfig",
    "CrlAgent",
    "GaussianPolicy",
    "GoalEncoder",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "SAEncoder",
    "actor_loss",
    "augment_batch",
    "augment_observation",
    "augmented_critic_matrix",
    "critic_matrix",
    "diagonal_accuracy",
    "encode_critic_matrix",
    "infonce_loss",
]
