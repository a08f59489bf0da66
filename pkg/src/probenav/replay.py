"""Patient-tagged trajectory storage, geometric future-goal sampling, and
contrastive patient batching (CPB).

The buffer is a bounded ring of whole trajectories with a patient index.
One writer and one reader may run concurrently: appends and snapshots are
lock-guarded and trajectories are immutable once stored, so a sampled batch
never sees a partially written episode.
"""

from __future__ import annotations

import csv
import io
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .env import Pose5


class SamplingError(ValueError):
    """Batch request cannot be satisfied by the current buffer contents."""


class TrajectoryError(ValueError):
    """Malformed trajectory rejected on append."""


@dataclass
class Trajectory:
    """One episode from one patient: n+1 observations, n actions.

    Poses are diagnostics only and never feed the networks. The episode's
    goal observation is carried along as the actor's random-goal pool.
    """

    patient_id: int
    observations: np.ndarray          # (n+1, h, w)
    actions: np.ndarray               # (n, 5)
    poses: tuple = ()
    goal_obs: np.ndarray | None = None
    goal_pose: Pose5 | None = None
    uid: int = -1

    @property
    def n(self) -> int:
        return len(self.actions)

    def validate(self) -> None:
        if self.observations.ndim != 3 or self.actions.ndim != 2:
            raise TrajectoryError("observations must be (n+1, h, w), actions (n, 5)")
        if len(self.observations) != len(self.actions) + 1:
            raise TrajectoryError(
                f"{len(self.observations)} observations vs {len(self.actions)} actions")
        if len(self.actions) < 1:
            raise TrajectoryError("trajectory needs at least one action")
        if self.poses and len(self.poses) != len(self.observations):
            raise TrajectoryError("pose record length mismatch")
        if not np.isfinite(self.observations).all() or not np.isfinite(self.actions).all():
            raise TrajectoryError("non-finite trajectory payload")


@dataclass
class TripletBatch:
    """N aligned (observation, action, goal) rows with provenance tags."""

    obs: np.ndarray                  # (N, h, w)
    actions: np.ndarray              # (N, 5)
    goals: np.ndarray                # (N, h, w)
    patient_ids: np.ndarray          # (N,)
    traj_uids: np.ndarray            # (N,)
    t: np.ndarray                    # (N,)
    goal_t: np.ndarray               # (N,)
    is_positive: np.ndarray          # (N,) bool

    def __post_init__(self):
        n = len(self.obs)
        if n < 2 or n % 2:
            raise SamplingError(f"batch size must be even and >= 2, got {n}")

    def __len__(self) -> int:
        return len(self.obs)


def sample_goal_offset(gamma: float, rng: np.random.Generator) -> int:
    """Unclamped Delta ~ Geometric(1 - gamma) on support {1, 2, ...}."""
    if not 0.0 <= gamma < 1.0:
        raise SamplingError(f"gamma must be in [0, 1), got {gamma}")
    return int(rng.geometric(1.0 - gamma))


def sample_future_goal(traj: Trajectory, t: int, gamma: float,
                       rng: np.random.Generator) -> int:
    """Goal timestep T = min(t + Delta, n); t must not be the last index."""
    if t >= traj.n:
        raise SamplingError(f"t={t} has no future in a trajectory of n={traj.n}")
    return min(t + sample_goal_offset(gamma, rng), traj.n)


class ReplayBuffer:
    RANDOM_PATIENTS = "random"

    def __init__(self, capacity: int = 2048):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._store: list[Trajectory] = []
        self._by_patient: dict[int, list[Trajectory]] = {}
        self._next_uid = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)

    def append(self, traj: Trajectory) -> int:
        traj.validate()
        with self._lock:
            traj.uid = self._next_uid
            self._next_uid += 1
            self._store.append(traj)
            self._by_patient.setdefault(traj.patient_id, []).append(traj)
            if len(self._store) > self.capacity:
                evicted = self._store.pop(0)
                bucket = self._by_patient[evicted.patient_id]
                bucket.remove(evicted)
                if not bucket:
                    del self._by_patient[evicted.patient_id]
            return traj.uid

    def patients(self) -> list[int]:
        with self._lock:
            return sorted(self._by_patient)

    def snapshot(self) -> tuple[tuple[Trajectory, ...], dict[int, tuple[Trajectory, ...]]]:
        with self._lock:
            return (tuple(self._store),
                    {pid: tuple(ts) for pid, ts in self._by_patient.items()})

    # -- batch construction -------------------------------------------------

    def sample_cpb_batch(self, n: int, patients_per_batch, gamma: float,
                         rng: np.random.Generator) -> TripletBatch:
        """CPB batch: P distinct patients, n/P triplets each.

        ``patients_per_batch="random"`` reproduces the default strategy:
        trajectories drawn uniformly from the whole buffer, patient tags
        ignored.
        """
        store, by_patient = self.snapshot()
        if not store:
            raise SamplingError("buffer is empty")

        if patients_per_batch == self.RANDOM_PATIENTS:
            chosen = [store[int(i)] for i in rng.integers(0, len(store), size=n)]
        else:
            p = int(patients_per_batch)
            if p < 1:
                raise SamplingError("patients per batch must be >= 1")
            if n % p:
                raise SamplingError(f"batch size {n} not divisible by {p} patients")
            available = sorted(by_patient)
            if len(available) < p:
                raise SamplingError(
                    f"need {p} distinct patients, buffer holds {len(available)}")
            picked = rng.choice(available, size=p, replace=False)
            chosen = []
            for pid in picked:
                bucket = by_patient[int(pid)]
                for i in rng.integers(0, len(bucket), size=n // p):
                    chosen.append(bucket[int(i)])

        return self._assemble(chosen, gamma, rng)

    def _assemble(self, trajs: list[Trajectory], gamma: float,
                  rng: np.random.Generator) -> TripletBatch:
        obs, actions, goals = [], [], []
        pids, uids, ts, gts = [], [], [], []
        for traj in trajs:
            t = int(rng.integers(0, traj.n))
            goal_t = sample_future_goal(traj, t, gamma, rng)
            obs.append(traj.observations[t])
            actions.append(traj.actions[t])
            goals.append(traj.observations[goal_t])
            pids.append(traj.patient_id)
            uids.append(traj.uid)
            ts.append(t)
            gts.append(goal_t)
        return TripletBatch(
            obs=np.stack(obs), actions=np.stack(actions), goals=np.stack(goals),
            patient_ids=np.array(pids), traj_uids=np.array(uids),
            t=np.array(ts), goal_t=np.array(gts),
            is_positive=np.ones(len(trajs), dtype=bool))

    def sample_actor_goals(self, traj_uids: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
        """Goal images from trajectories with a different identity per row.

        Uses the episodes' recorded goal observations; falls back to a random
        observation when a trajectory carries none. With a single stored
        trajectory the identity constraint is unsatisfiable and is dropped.
        """
        store, _ = self.snapshot()
        if not store:
            raise SamplingError("buffer is empty")
        out = []
        for uid in traj_uids:
            candidates = store
            if len(store) > 1:
                candidates = [tr for tr in store if tr.uid != uid]
            tr = candidates[int(rng.integers(0, len(candidates)))]
            if tr.goal_obs is not None:
                out.append(tr.goal_obs)
            else:
                out.append(tr.observations[int(rng.integers(0, len(tr.observations)))])
        return np.stack(out)

    # -- inspection ----------------------------------------------------------

    def dump_trace(self, path) -> None:
        """Binary trace of the buffer contents (see format notes below).

        Layout, little-endian: magic b"PNTR", version u32, count u32, then
        per trajectory: patient_id i64, uid i64, n u32, h u32, w u32,
        observations ((n+1)*h*w f64), actions (n*5 f64), pose rows
        ((n+1)*5 f64 or absent, flag u8), goal flag u8 followed by the goal
        image (h*w f64) and goal pose (5 f64) when set.
        """
        store, _ = self.snapshot()
        buf = io.BytesIO()
        buf.write(b"PNTR")
        buf.write(struct.pack("<I", 1))
        buf.write(struct.pack("<I", len(store)))
        for tr in store:
            npts, h, w = tr.observations.shape
            buf.write(struct.pack("<qqIII", tr.patient_id, tr.uid, npts - 1, h, w))
            buf.write(np.ascontiguousarray(tr.observations, dtype="<f8").tobytes())
            buf.write(np.ascontiguousarray(tr.actions, dtype="<f8").tobytes())
            if tr.poses:
                buf.write(struct.pack("<B", 1))
                rows = np.stack([p.as_array() for p in tr.poses])
                buf.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
            else:
                buf.write(struct.pack("<B", 0))
            if tr.goal_obs is not None and tr.goal_pose is not None:
                buf.write(struct.pack("<B", 1))
                buf.write(np.ascontiguousarray(tr.goal_obs, dtype="<f8").tobytes())
                buf.write(np.ascontiguousarray(tr.goal_pose.as_array(), dtype="<f8").tobytes())
            else:
                buf.write(struct.pack("<B", 0))
        with open(path, "wb") as f:
            f.write(buf.getvalue())


def write_batch_debug_csv(batch: TripletBatch, path) -> None:
    """Audit file: one row per batch entry with its provenance."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["entry", "patient_id", "traj_uid", "t", "goal_t",
                         "is_positive"])
        for i in range(len(batch)):
            writer.writerow([i, int(batch.patient_ids[i]), int(batch.traj_uids[i]),
                             int(batch.t[i]), int(batch.goal_t[i]),
                             bool(batch.is_positive[i])])
