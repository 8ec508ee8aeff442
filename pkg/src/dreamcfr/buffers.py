"""Replay storage: reservoir and circular sample buffers, plus the model archive.

Both buffers hold fixed-width float64 rows split into named column
groups, preallocated at construction. The reservoir keeps a uniform
random subset of everything ever offered to it (classic algorithm R);
the circular buffer keeps the most recent rows, overwriting oldest
first. Each exposes its state as plain arrays so checkpoints can be
written with np.savez and restored bit for bit.

The archive stores one trained network per (agent, iteration). Weights
are pushed through the 32-bit serialization on append, so the model a
reader gets back is exactly the model a reloaded run would see.
"""

from __future__ import annotations

import json
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SamplingError
from .nets import MLPParams, net_from_bytes, net_to_bytes, save_net

Fields = Sequence[Tuple[str, int]]

UNIFORM = "uniform"
LINEAR = "linear"
WEIGHTING_NAMES = (UNIFORM, LINEAR)


class _RowStore:
    """(capacity, width) table with named column slices; storage grows on
    demand so huge configured capacities cost nothing until filled."""

    def __init__(self, capacity: int, fields: Fields):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.fields = tuple((str(n), int(d)) for n, d in fields)
        self._slices: Dict[str, slice] = {}
        off = 0
        for name, dim in self.fields:
            if dim <= 0 or name in self._slices:
                raise ValueError(f"bad field ({name}, {dim})")
            self._slices[name] = slice(off, off + dim)
            off += dim
        self.width = off
        self.data = np.zeros((min(self.capacity, 1024), self.width))
        self.size = 0

    def _ensure(self, slot: int) -> None:
        if slot < len(self.data):
            return
        alloc = len(self.data)
        while alloc <= slot:
            alloc = min(self.capacity, alloc * 2)
        grown = np.zeros((alloc, self.width))
        grown[: self.size] = self.data[: self.size]
        self.data = grown

    def _pack(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        if set(values) != set(self._slices):
            raise ValueError(f"expected fields {sorted(self._slices)}, got {sorted(values)}")
        row = np.empty(self.width)
        for name, sl in self._slices.items():
            v = np.asarray(values[name], dtype=float).ravel()
            if v.shape[0] != sl.stop - sl.start:
                raise ValueError(f"field {name}: expected {sl.stop - sl.start} values, got {v.shape[0]}")
            row[sl] = v
        return row

    def column(self, name: str, idx: Optional[np.ndarray] = None) -> np.ndarray:
        """Stored values for one field, over all rows or a row-index array."""
        rows = self.data[: self.size] if idx is None else self.data[idx]
        return rows[:, self._slices[name]]

    def __len__(self) -> int:
        return self.size


class ReservoirBuffer(_RowStore):
    """Uniform random subset of the full insertion stream.

    After N adds the stored rows are distributed as a uniform
    size-min(N, capacity) sample without replacement.
    """

    def __init__(self, capacity: int, fields: Fields):
        super().__init__(capacity, fields)
        self.counter = 0  # total rows ever offered

    def add(self, rng: np.random.Generator, **values) -> bool:
        """Offer one row; returns True when it was stored."""
        row = self._pack(values)
        self.counter += 1
        if self.size < self.capacity:
            self._ensure(self.size)
            self.data[self.size] = row
            self.size += 1
            return True
        j = int(rng.integers(0, self.counter))
        if j >= self.capacity:
            return False
        self.data[j] = row
        return True

    def to_state(self) -> Dict[str, np.ndarray]:
        return {
            "data": self.data[: self.size].copy(),
            "size": np.asarray(self.size),
            "counter": np.asarray(self.counter),
        }

    def from_state(self, state: Dict[str, np.ndarray]) -> None:
        size = int(state["size"])
        if size > self.capacity:
            raise ValueError("checkpoint larger than buffer capacity")
        self._ensure(max(size - 1, 0))
        self.data[:size] = state["data"]
        self.size = size
        self.counter = int(state["counter"])


class CircularBuffer(_RowStore):
    """Ring of the most recent rows; overwrites strictly oldest-first."""

    def __init__(self, capacity: int, fields: Fields):
        super().__init__(capacity, fields)
        self.cursor = 0  # next slot to write

    def add(self, **values) -> None:
        self._ensure(self.cursor)
        self.data[self.cursor] = self._pack(values)
        self.cursor = (self.cursor + 1) % self.capacity
        if self.size < self.capacity:
            self.size += 1

    def ordered_indices(self) -> np.ndarray:
        """Row indices oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return np.roll(np.arange(self.capacity), -self.cursor)

    def to_state(self) -> Dict[str, np.ndarray]:
        return {
            "data": self.data[: self.size].copy(),
            "size": np.asarray(self.size),
            "cursor": np.asarray(self.cursor),
        }

    def from_state(self, state: Dict[str, np.ndarray]) -> None:
        size = int(state["size"])
        if size > self.capacity:
            raise ValueError("checkpoint larger than buffer capacity")
        self._ensure(max(size - 1, 0))
        self.data[:size] = state["data"]
        self.size = size
        self.cursor = int(state["cursor"])


INDEX_NAME = "index.json"


class ModelArchive:
    """Every iteration's trained policy network, per agent.

    Appending quantizes the parameters through the 32-bit wire format so
    in-memory models match what load_archive would read back. With a
    directory attached, each model is written as its own file next to an
    index manifest.
    """

    def __init__(self, n_agents: int = 2, directory: Optional[str] = None):
        self._models: List[List[Tuple[int, MLPParams]]] = [[] for _ in range(n_agents)]
        self.directory = directory
        if directory is not None:
            os.makedirs(directory, exist_ok=True)

    @property
    def n_agents(self) -> int:
        return len(self._models)

    def append(self, agent: int, iteration: int, params: MLPParams) -> MLPParams:
        """Store a model; returns the quantized copy actually kept."""
        models = self._models[agent]
        if models and iteration <= models[-1][0]:
            raise ValueError(f"iteration {iteration} not after {models[-1][0]} for agent {agent}")
        blob = net_to_bytes(params)
        kept = net_from_bytes(blob)
        models.append((iteration, kept))
        if self.directory is not None:
            path = os.path.join(self.directory, self._filename(agent, iteration))
            with open(path, "wb") as fh:
                fh.write(blob)
            self._write_index()
        return kept

    @staticmethod
    def _filename(agent: int, iteration: int) -> str:
        return f"agent{agent}_iter{iteration:06d}.net"

    def _write_index(self) -> None:
        entries = []
        for agent, models in enumerate(self._models):
            for t, _ in models:
                entries.append(
                    {"agent": agent, "iteration": t, "file": self._filename(agent, t)}
                )
        index = {"n_agents": self.n_agents, "models": entries}
        path = os.path.join(self.directory, INDEX_NAME)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(index, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)

    def truncate(self, iteration: int) -> int:
        """Drop models past an iteration, e.g. work beyond a checkpoint."""
        dropped = 0
        for agent, models in enumerate(self._models):
            keep = [(t, p) for t, p in models if t <= iteration]
            for t, _ in models[len(keep):]:
                dropped += 1
                if self.directory is not None:
                    path = os.path.join(self.directory, self._filename(agent, t))
                    if os.path.exists(path):
                        os.remove(path)
            self._models[agent] = keep
        if dropped and self.directory is not None:
            self._write_index()
        return dropped

    def models(self, agent: int) -> List[Tuple[int, MLPParams]]:
        return list(self._models[agent])

    def iterations(self, agent: int) -> List[int]:
        return [t for t, _ in self._models[agent]]

    def latest(self, agent: int) -> Optional[MLPParams]:
        models = self._models[agent]
        return models[-1][1] if models else None

    def __len__(self) -> int:
        return sum(len(m) for m in self._models)


def load_archive(directory: str) -> ModelArchive:
    with open(os.path.join(directory, INDEX_NAME)) as fh:
        index = json.load(fh)
    archive = ModelArchive(n_agents=int(index["n_agents"]), directory=directory)
    entries = sorted(index["models"], key=lambda e: (e["agent"], e["iteration"]))
    for entry in entries:
        with open(os.path.join(directory, entry["file"]), "rb") as fh:
            params = net_from_bytes(fh.read())
        archive._models[int(entry["agent"])].append((int(entry["iteration"]), params))
    return archive


def archive_weights(iterations: Sequence[int], weighting: str) -> np.ndarray:
    """Normalized sampling weights over archived models."""
    if weighting == UNIFORM:
        w = np.ones(len(iterations))
    elif weighting == LINEAR:
        w = np.asarray(iterations, dtype=float)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return w / w.sum()


def archive_sample(
    archive: ModelArchive, agent: int, rng: np.random.Generator, weighting: str = UNIFORM
) -> MLPParams:
    """Draw one archived model, uniformly or with probability proportional to t."""
    models = archive.models(agent)
    if not models:
        raise SamplingError(f"archive holds no models for agent {agent}")
    probs = archive_weights([t for t, _ in models], weighting)
    pick = int(rng.choice(len(models), p=probs))
    return models[pick][1]
