"""Transition storage with exact online/offline batch mixing."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Transition:
    obs: np.ndarray
    a_K: int
    a_R: np.ndarray
    r_K: float
    r_R: float
    next_obs: np.ndarray
    done: bool
    cause: str = ""

    @property
    def terminal(self) -> bool:
        """True when the value target must not bootstrap (failure, not timeout)."""
        return self.done and self.cause != "timeout"


class _Partition:
    def __init__(self, capacity: int, obs_dim: int, n_R: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.a_K = np.zeros(capacity, dtype=np.int64)
        self.a_R = np.zeros((capacity, n_R))
        self.r_K = np.zeros(capacity)
        self.r_R = np.zeros(capacity)
        self.terminal = np.zeros(capacity)
        self.size = 0
        self.head = 0

    def add(self, t: Transition):
        i = self.head
        self.obs[i] = t.obs
        self.next_obs[i] = t.next_obs
        self.a_K[i] = t.a_K
        self.a_R[i] = t.a_R
        self.r_K[i] = t.r_K
        self.r_R[i] = t.r_R
        self.terminal[i] = float(t.terminal)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def take(self, idx: np.ndarray) -> dict:
        return {"obs": self.obs[idx].astype(float), "next_obs": self.next_obs[idx].astype(float),
                "a_K": self.a_K[idx], "a_R": self.a_R[idx], "r_K": self.r_K[idx], "r_R": self.r_R[idx],
                "terminal": self.terminal[idx]}


class ReplayBuffer:
    """Online ring buffer plus a fixed offline partition.

    With mixing on and both partitions filled, every batch holds exactly
    ceil(B/2) online and floor(B/2) offline samples. If either partition is
    empty the batch comes from the other one and a warning is logged once.
    """

    def __init__(self, capacity: int, obs_dim: int, n_R: int, offline_capacity: int = 0, mixing: bool = True):
        self.online = _Partition(capacity, obs_dim, n_R)
        self.offline = _Partition(max(offline_capacity, 1), obs_dim, n_R)
        self.offline_capacity = offline_capacity
        self.mixing = mixing
        self._warned = False
        self.last_counts = (0, 0)

    def __len__(self):
        return self.online.size + self.offline.size

    def add(self, t: Transition, offline: bool = False):
        if offline:
            if self.offline.size >= self.offline_capacity:
                raise ValueError("offline partition is full")
            self.offline.add(t)
        else:
            self.online.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        n_on, n_off = self.online.size, self.offline.size
        if n_on + n_off == 0:
            raise ValueError("cannot sample from an empty buffer")
        if self.mixing and n_on > 0 and n_off > 0:
            k_on = (batch_size + 1) // 2
            k_off = batch_size // 2
        else:
            if self.mixing and not self._warned:
                log.warning("replay mixing disabled for this batch: %s partition is empty",
                            "offline" if n_off == 0 else "online")
                self._warned = True
            k_on, k_off = (batch_size, 0) if n_on > 0 else (0, batch_size)
        parts = []
        if k_on:
            parts.append(self.online.take(rng.integers(0, n_on, size=k_on)))
        if k_off:
            parts.append(self.offline.take(rng.integers(0, n_off, size=k_off)))
        self.last_counts = (k_on, k_off)
        if len(parts) == 1:
            out = parts[0]
        else:
            out = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
        out["source"] = np.concatenate([np.zeros(k_on, dtype=np.int8), np.ones(k_off, dtype=np.int8)])
        return out
