"""Training harness: rollouts, interleaved critic/actor updates, validation,
checkpointing, and fine-tuning.

Variants share one code path and differ only in batch construction and
augmentation: CRL-D samples batches buffer-wide and skips augmentation,
CRL+B uses contrastive patient batching, CRL+BA adds the shift-augmented
critic loss.

Single-threaded runs (rollout_workers=1) are bit-reproducible: all
randomness flows through named generator streams whose states are saved in
checkpoints. With rollout_workers > 1, worker threads collect episodes
against read-only policy snapshots refreshed every few updates while the
learner remains the buffer's single writer.
"""

from __future__ import annotations

import dataclasses
import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import (
    ACTION_DIM,
    AgentConfig,
    CrlAgent,
    actor_loss,
    augmented_critic_matrix,
    diagonal_accuracy,
    infonce_loss,
)
from .checkpoint import Checkpoint, CheckpointError
from .env import VirtualPatientEnv, load_env_config, pose_errors
from .nn import AdamState, NonFiniteError, adam_step, backward
from .replay import ReplayBuffer, Trajectory, write_batch_debug_csv

VARIANTS = ("crl-d", "crl-b", "crl-ba")

_VAL_SEED_DOMAIN = 0x56414C49


class TrainingDiverged(RuntimeError):
    """Non-finite loss; the offending batch was dumped for inspection."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # task
    gamma: float = 0.99
    episode_len: int = 30
    batch_n: int = 32
    patients_per_batch: int | str = 2
    variant: str = "crl-ba"
    augment_k: int = 2
    shift_pad: int = 4
    # networks
    latent_dim: int = 64
    hidden: tuple = (64,)
    activation: str = "tanh"
    temperature_init: float = 1.0
    temperature_learnable: bool = True
    l2_coeff: float = 1e-4
    # optimization
    lr_actor: float = 1e-4
    lr_critic: float = 3e-4
    total_env_steps: int = 100_000
    updates_per_env_step: float = 1.0
    buffer_capacity: int = 2048
    warmup_episodes: int = 8
    # evaluation and logging cadence (in environment steps)
    validate_every_steps: int = 1000
    val_episodes: int = 8
    checkpoint_every_steps: int = 0  # 0 = only final
    # patient split and views
    train_patients: tuple = tuple(range(8))
    val_patients: tuple = (8, 9, 10, 11)
    test_patients: tuple = tuple(range(12, 20))
    train_views: tuple = ("V1", "V2", "V3", "V4")
    structures: tuple = ()
    variation_scale: float | None = None
    template_id: int = 0
    env_config_path: str | None = None
    # run control
    seed: int = 0
    rollout_workers: int = 1
    snapshot_refresh_updates: int = 50
    out_dir: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must be in [0, 1)")
        if self.batch_n < 2 or self.batch_n % 2:
            raise ConfigError("batch_n must be even and >= 2")
        if self.total_env_steps < 0:
            raise ConfigError("total_env_steps must be >= 0")
        if self.updates_per_env_step < 0:
            raise ConfigError("updates_per_env_step must be >= 0")
        if isinstance(self.patients_per_batch, int):
            if self.patients_per_batch < 1 or self.batch_n % self.patients_per_batch:
                raise ConfigError("patients_per_batch must divide batch_n")
        elif self.patients_per_batch != ReplayBuffer.RANDOM_PATIENTS:
            raise ConfigError("patients_per_batch must be an int or 'random'")
        sets = [set(self.train_patients), set(self.val_patients), set(self.test_patients)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigError("train/val/test patient sets must be disjoint")
        if not self.train_patients:
            raise ConfigError("need at least one training patient")
        if self.rollout_workers < 1:
            raise ConfigError("rollout_workers must be >= 1")

    # -- variant resolution ------------------------------------------------

    def batching(self):
        if self.variant == "crl-d":
            return ReplayBuffer.RANDOM_PATIENTS
        return self.patients_per_batch

    def augmentation(self) -> tuple[int, int]:
        """(K, pad); K=1/pad=0 disables augmentation exactly."""
        if self.variant == "crl-ba":
            return self.augment_k, self.shift_pad
        return 1, 0

    def agent_config(self) -> AgentConfig:
        return AgentConfig(latent_dim=self.latent_dim, hidden=tuple(self.hidden),
                           activation=self.activation,
                           temperature_init=self.temperature_init,
                           temperature_learnable=self.temperature_learnable,
                           l2_coeff=self.l2_coeff, augment_k=self.augment_k,
                           shift_pad=self.shift_pad)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        for key in ("train_patients", "val_patients", "test_patients",
                    "train_views", "structures"):
            out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        kwargs = dict(raw)
        for key in ("hidden", "train_patients", "val_patients", "test_patients",
                    "train_views", "structures"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        unknown = set(kwargs) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TrainConfig":
        import yaml
        raw = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(raw)


@dataclass
class MetricsLog:
    """Append-only per-interval records, mirrored to CSV when a path is set."""

    HEADER = ("env_steps", "updates", "critic_loss", "actor_loss",
              "diag_acc", "val_pos_err_mm", "val_ang_err_deg")

    path: Path | None = None
    rows: list = field(default_factory=list)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(",".join(self.HEADER) + "\n")

    def append(self, env_steps: int, updates: int, critic_loss: float,
               actor_loss_value: float, diag_acc: float,
               val_pos: float, val_ang: float) -> None:
        if self.rows and env_steps < self.rows[-1][0]:
            raise ValueError("metrics steps must be monotone")
        row = (env_steps, updates, critic_loss, actor_loss_value, diag_acc,
               val_pos, val_ang)
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                 for v in row) + "\n")

    def first_row_at_or_after(self, env_steps: int):
        for row in self.rows:
            if row[0] >= env_steps:
                return row
        return None


def build_env(config: TrainConfig) -> VirtualPatientEnv:
    env_config = load_env_config(config.env_config_path)
    return VirtualPatientEnv(env_config, template_id=config.template_id,
                             variation_scale=config.variation_scale,
                             with_structures=frozenset(config.structures))


def rollout_episode(env: VirtualPatientEnv, policy, config: TrainConfig,
                    rng: np.random.Generator, patient_id: int | None = None,
                    view_id: str | None = None,
                    deterministic: bool = False) -> Trajectory:
    """One episode: start at a perturbed standard-view pose, navigate toward a
    further-perturbed goal pose. The standard view itself is never a label;
    the agent only ever sees the rendered goal image."""
    if patient_id is None:
        patient_id = int(rng.choice(np.asarray(config.train_patients)))
    if view_id is None:
        view_id = str(rng.choice(np.asarray(config.train_views)))
    ranges = env.config.perturbation
    gt_pose = env.view_pose(patient_id, view_id)
    pose = env.perturb(patient_id, gt_pose, ranges.start, rng)
    goal_pose = env.perturb(patient_id, pose, ranges.goal, rng)
    goal_obs = env.observe(patient_id, goal_pose)
    goal_flat = goal_obs.reshape(-1)

    observations = [env.observe(patient_id, pose)]
    poses = [pose]
    actions = []
    for _ in range(config.episode_len):
        action = policy.act(observations[-1].reshape(-1), goal_flat,
                            rng, deterministic=deterministic)
        pose = env.step(patient_id, pose, action)
        actions.append(action)
        observations.append(env.observe(patient_id, pose))
        poses.append(pose)
    return Trajectory(patient_id=patient_id,
                      observations=np.stack(observations),
                      actions=np.stack(actions),
                      poses=tuple(poses),
                      goal_obs=goal_obs,
                      goal_pose=goal_pose)


def validate(env: VirtualPatientEnv, agent: CrlAgent, config: TrainConfig,
             round_index: int) -> tuple[float, float]:
    """Deterministic-policy rollouts on held-out patients; errors are
    measured against the perturbed goal pose whose image was given."""
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _VAL_SEED_DOMAIN, round_index]))
    pos_errs, ang_errs = [], []
    patients = np.asarray(config.val_patients if config.val_patients
                          else config.train_patients)
    for _ in range(config.val_episodes):
        pid = int(rng.choice(patients))
        vid = str(rng.choice(np.asarray(config.train_views)))
        ranges = env.config.perturbation
        gt_pose = env.view_pose(pid, vid)
        pose = env.perturb(pid, gt_pose, ranges.start, rng)
        goal_pose = env.perturb(pid, pose, ranges.goal, rng)
        goal_flat = env.observe(pid, goal_pose).reshape(-1)
        for _ in range(config.episode_len):
            action = agent.policy.act(env.observe(pid, pose).reshape(-1), goal_flat,
                                      deterministic=True)
            pose = env.step(pid, pose, action)
        pos, ang = env.errors(pid, pose, goal_pose)
        pos_errs.append(pos)
        ang_errs.append(ang)
    return float(np.mean(pos_errs)), float(np.mean(ang_errs))


class _Learner:
    """Owns the networks, optimizers, and RNG streams during one run."""

    def __init__(self, config: TrainConfig, resume: Checkpoint | None = None):
        self.config = config
        self.env = build_env(config)
        obs_dim = self.env.obs_dim()
        streams = np.random.SeedSequence(config.seed).spawn(5)
        self.rngs = {
            "init": np.random.default_rng(streams[0]),
            "rollout": np.random.default_rng(streams[1]),
            "sample": np.random.default_rng(streams[2]),
            "augment": np.random.default_rng(streams[3]),
            "noise": np.random.default_rng(streams[4]),
        }
        self.agent = CrlAgent.build(obs_dim, config.agent_config(), self.rngs["init"])
        self.critic_opt = AdamState.for_params(self.agent.critic_params,
                                               lr=config.lr_critic)
        self.actor_opt = AdamState.for_params(self.agent.actor_params,
                                              lr=config.lr_actor)
        self.buffer = ReplayBuffer(capacity=config.buffer_capacity)
        self.env_steps = 0
        self.updates = 0
        self.val_round = 0
        if resume is not None:
            self._restore(resume)

    def _restore(self, ckpt: Checkpoint) -> None:
        try:
            self.agent.critic_params.load_values(ckpt.params["critic"])
            self.agent.actor_params.load_values(ckpt.params["actor"])
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"checkpoint incompatible with config: {exc}") from exc
        self.critic_opt = ckpt.adam["critic"]
        self.actor_opt = ckpt.adam["actor"]
        self.env_steps = ckpt.env_steps
        self.updates = ckpt.updates
        self.val_round = ckpt.val_round
        for name, state in ckpt.rng_states.items():
            if name in self.rngs:
                self.rngs[name].bit_generator.state = _destringify_rng(state)

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config.to_dict(),
            env_steps=self.env_steps,
            updates=self.updates,
            val_round=self.val_round,
            rng_states={name: _stringify_rng(rng.bit_generator.state)
                        for name, rng in self.rngs.items()},
            params={"critic": self.agent.critic_params.copy_values(),
                    "actor": self.agent.actor_params.copy_values()},
            adam={"critic": self.critic_opt, "actor": self.actor_opt},
        )

    def buffer_ready(self) -> bool:
        batching = self.config.batching()
        if len(self.buffer) < 2:
            return False
        if batching == ReplayBuffer.RANDOM_PATIENTS:
            return True
        return len(self.buffer.patients()) >= batching

    def update_once(self) -> tuple[float, float, float]:
        """One critic step plus one actor step; returns (closs, aloss, diag)."""
        config = self.config
        batch = self.buffer.sample_cpb_batch(config.batch_n, config.batching(),
                                             config.gamma, self.rngs["sample"])
        k, pad = config.augmentation()
        try:
            self.agent.critic_params.zero_grads()
            q, raw = augmented_critic_matrix(
                self.agent.sa_encoder, self.agent.goal_encoder,
                batch.obs, batch.actions, batch.goals,
                k=k, pad=pad, rng=self.rngs["augment"])
            closs = infonce_loss(q, l2_coeff=config.l2_coeff, raw_sa=raw)
            backward(closs)
            adam_step(self.agent.critic_params, self.critic_opt)
            diag = diagonal_accuracy(q.data)

            actor_goals = self.buffer.sample_actor_goals(batch.traj_uids,
                                                         self.rngs["sample"])
            noise = self.rngs["noise"].standard_normal((config.batch_n, ACTION_DIM))
            self.agent.actor_params.zero_grads()
            aloss = actor_loss(self.agent.policy, self.agent.sa_encoder,
                               self.agent.goal_encoder, batch.obs, actor_goals,
                               noise)
            backward(aloss)
            adam_step(self.agent.actor_params, self.actor_opt)
        except NonFiniteError as exc:
            path = self._dump_batch(batch)
            raise TrainingDiverged(f"{exc} (offending batch dumped to {path})") from exc
        self.updates += 1
        return closs.item(), aloss.item(), diag

    def _dump_batch(self, batch) -> str:
        out_dir = Path(self.config.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        base = out_dir / f"diverged_batch_step{self.env_steps}"
        np.savez(str(base) + ".npz", obs=batch.obs, actions=batch.actions,
                 goals=batch.goals, patient_ids=batch.patient_ids,
                 t=batch.t, goal_t=batch.goal_t)
        write_batch_debug_csv(batch, str(base) + ".csv")
        return str(base) + ".npz"


def _stringify_rng(state: dict) -> dict:
    return json.loads(json.dumps(state))


def _destringify_rng(state: dict) -> dict:
    return state


def train(config: TrainConfig, resume: Checkpoint | None = None
          ) -> tuple[Checkpoint, MetricsLog]:
    """Run the training loop to ``total_env_steps``; returns the final
    checkpoint and the metrics log. With ``out_dir`` set, metrics stream to
    ``metrics.csv`` and checkpoints are written there too."""
    learner = _Learner(config, resume=resume)
    out_dir = Path(config.out_dir) if config.out_dir else None
    metrics = MetricsLog(path=out_dir / "metrics.csv" if out_dir else None)

    if config.rollout_workers > 1:
        _collect_threaded(learner, metrics)
    else:
        _collect_inline(learner, metrics)

    ckpt = learner.checkpoint()
    if out_dir:
        ckpt.save(out_dir / "checkpoint_final.bin")
    return ckpt, metrics


def _collect_inline(learner: _Learner, metrics: MetricsLog) -> None:
    config = learner.config
    loss_acc: list[tuple[float, float, float]] = []
    updates_owed = 0.0
    next_validation = learner.env_steps
    next_checkpoint = (learner.env_steps + config.checkpoint_every_steps
                       if config.checkpoint_every_steps else None)
    episodes = 0

    while learner.env_steps < config.total_env_steps:
        if learner.env_steps >= next_validation:
            _log_round(learner, metrics, loss_acc)
            loss_acc.clear()
            next_validation = learner.env_steps + config.validate_every_steps
        traj = rollout_episode(learner.env, learner.agent.policy, config,
                               learner.rngs["rollout"])
        learner.buffer.append(traj)
        learner.env_steps += traj.n
        episodes += 1
        if episodes >= config.warmup_episodes:
            updates_owed += traj.n * config.updates_per_env_step
        while updates_owed >= 1.0 and learner.buffer_ready():
            loss_acc.append(learner.update_once())
            updates_owed -= 1.0
        if next_checkpoint and learner.env_steps >= next_checkpoint and config.out_dir:
            learner.checkpoint().save(
                Path(config.out_dir) / f"checkpoint_{learner.env_steps}.bin")
            next_checkpoint = learner.env_steps + config.checkpoint_every_steps

    if config.total_env_steps > 0:
        _log_round(learner, metrics, loss_acc)


def _log_round(learner: _Learner, metrics: MetricsLog,
               loss_acc: list[tuple[float, float, float]]) -> None:
    config = learner.config
    val_pos, val_ang = validate(learner.env, learner.agent, config,
                                learner.val_round)
    learner.val_round += 1
    if loss_acc:
        arr = np.asarray(loss_acc)
        closs, aloss, diag = arr[:, 0].mean(), arr[:, 1].mean(), arr[:, 2].mean()
    else:
        closs = aloss = diag = float("nan")
    metrics.append(learner.env_steps, learner.updates, float(closs), float(aloss),
                   float(diag), val_pos, val_ang)


def _collect_threaded(learner: _Learner, metrics: MetricsLog) -> None:
    """R rollout workers feed the learner through a queue; the learner stays
    the buffer's single writer and refreshes policy snapshots periodically."""
    config = learner.config
    stop = threading.Event()
    episode_queue: queue.Queue = queue.Queue(maxsize=config.rollout_workers * 2)
    snapshot_lock = threading.Lock()
    snapshot_values = {"v": learner.agent.actor_params.copy_values()}

    def refresh_snapshot():
        with snapshot_lock:
            snapshot_values["v"] = learner.agent.actor_params.copy_values()

    def worker(worker_seed: int):
        local = CrlAgent.build(learner.env.obs_dim(), config.agent_config(),
                               np.random.default_rng(worker_seed))
        rng = np.random.default_rng(worker_seed)
        loaded_at = -1
        while not stop.is_set():
            epoch = learner.updates // max(config.snapshot_refresh_updates, 1)
            if loaded_at != epoch:
                with snapshot_lock:
                    local.actor_params.load_values(snapshot_values["v"])
                loaded_at = epoch
            traj = rollout_episode(learner.env, local.policy, config, rng)
            while not stop.is_set():
                try:
                    episode_queue.put(traj, timeout=0.5)
                    break
                except queue.Full:
                    continue

    workers = [threading.Thread(target=worker, args=(config.seed * 9973 + i,),
                                daemon=True)
               for i in range(config.rollout_workers)]
    for w in workers:
        w.start()

    loss_acc: list[tuple[float, float, float]] = []
    updates_owed = 0.0
    next_validation = learner.env_steps
    last_refresh = 0
    episodes = 0
    try:
        while learner.env_steps < config.total_env_steps:
            if learner.env_steps >= next_validation:
                _log_round(learner, metrics, loss_acc)
                loss_acc.clear()
                next_validation = learner.env_steps + config.validate_every_steps
            traj = episode_queue.get()
            learner.buffer.append(traj)
            learner.env_steps += traj.n
            episodes += 1
            if episodes >= config.warmup_episodes:
                updates_owed += traj.n * config.updates_per_env_step
            while updates_owed >= 1.0 and learner.buffer_ready():
                loss_acc.append(learner.update_once())
                updates_owed -= 1.0
                if learner.updates - last_refresh >= config.snapshot_refresh_updates:
                    refresh_snapshot()
                    last_refresh = learner.updates
        if config.total_env_steps > 0:
            _log_round(learner, metrics, loss_acc)
    finally:
        stop.set()
        for w in workers:
            w.join(timeout=2.0)


def finetune(ckpt: Checkpoint, steps: int, train_patients, val_patients,
             structures=("appendage",), out_dir: str | None = None,
             seed: int | None = None) -> tuple[Checkpoint, MetricsLog]:
    """Resume optimizer state and train further on a new patient cohort with
    an optional structure enabled; the training procedure itself is
    unchanged and never samples around the new structure's view."""
    if steps < 0:
        raise ConfigError("finetune steps must be >= 0")
    base = TrainConfig.from_dict(ckpt.config)
    config = dataclasses.replace(
        base,
        total_env_steps=ckpt.env_steps + steps,
        train_patients=tuple(train_patients),
        val_patients=tuple(val_patients),
        test_patients=(),
        structures=tuple(structures),
        out_dir=out_dir,
        seed=base.seed if seed is None else seed,
    )
    return train(config, resume=ckpt)
