"""Truncated Euler scheme for the N-particle system.

Each particle starts at X_0^i + a_T^M Delta^i and then, on every step
[r_k, r_{k+1}), moves by b dt plus the sum of c(r_k, X^u, z, X^i, rho)
over its events.  All coefficient arguments are read from the frozen
left-endpoint state, so the update is a pure map from one buffer to the
next.  Particles are processed in fixed-size chunks; the thread count only
decides how many chunks run at once and never changes the arithmetic.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .coefficients import CoefficientModel, MeasureSummary
from .errors import ConfigError, NumericalError
from .events import Cell, EventList, generate_step_events
from .levy import LevyMeasureModel, tail_sigma
from .streams import StreamFamily, hash_address

CHUNK = 16384


def uniform_partition(T: float, dt: float) -> np.ndarray:
    if T == 0:
        return np.array([0.0])
    n = max(1, math.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, n + 1)


def coarsened(grid: np.ndarray, factor: int) -> np.ndarray:
    """Every ``factor``-th point of ``grid``, always keeping the endpoint."""
    pts = grid[::factor]
    if pts[-1] != grid[-1]:
        pts = np.append(pts, grid[-1])
    return pts


@dataclass(frozen=True)
class InitialLaw:
    kind: str = "point"  # point | gaussian | samples
    mean: tuple = (0.0,)
    cov: Optional[tuple] = None
    samples: Optional[np.ndarray] = None

    def sample(self, N: int, d: int, streams: StreamFamily) -> np.ndarray:
        idx = np.arange(N)[:, None]
        comp = np.arange(d)[None, :]
        if self.kind == "point":
            return np.broadcast_to(np.asarray(self.mean, dtype=float), (N, d)).copy()
        if self.kind == "gaussian":
            mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (d,))
            cov = np.eye(d) if self.cov is None else np.asarray(self.cov, dtype=float).reshape(d, d)
            g = streams.normal("init", idx, comp)
            return mean[None, :] + g @ np.linalg.cholesky(cov).T
        if self.kind == "samples":
            s = np.asarray(self.samples, dtype=float).reshape(-1, d)
            if s.shape[0] != N:
                raise ConfigError(f"initial sample file has {s.shape[0]} rows, expected N={N}")
            return s.copy()
        raise ConfigError(f"unknown initial law {self.kind!r}")

    def moments(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (d,)).copy()
        if self.kind == "point":
            return mean, np.zeros((d, d))
        if self.kind == "gaussian":
            return mean, np.eye(d) if self.cov is None else np.asarray(self.cov, dtype=float).reshape(d, d)
        s = np.asarray(self.samples, dtype=float).reshape(-1, d)
        return s.mean(axis=0), np.cov(s.T, bias=True).reshape(d, d)


@dataclass(frozen=True)
class SimConfig:
    """Everything a run depends on.

    ``cells`` is an optional finer grid containing every partition point;
    events are generated per cell, so runs on nested partitions that share
    ``cells`` and ``seed`` are driven by the same Poisson events.
    """

    T: float
    partition: np.ndarray
    M: int
    N: int
    seed: int
    levy: LevyMeasureModel
    coeffs: CoefficientModel
    init: InitialLaw = field(default_factory=InitialLaw)
    cells: Optional[np.ndarray] = None
    threads: int = 1
    sample_times: bool = False
    stream_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.partition, dtype=float)
        object.__setattr__(self, "partition", p)
        if self.T < 0:
            raise ConfigError("T must be nonnegative")
        if p[0] != 0.0 or not math.isclose(p[-1], self.T, rel_tol=0, abs_tol=1e-12):
            raise ConfigError("partition must run from 0 to T")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ConfigError("partition must be strictly increasing")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not 1 <= self.M <= self.levy.max_ring:
            raise ConfigError(f"M must lie in 1..{self.levy.max_ring}")
        if self.levy.d != self.coeffs.d:
            raise ConfigError("measure and coefficient dimensions differ")
        if self.cells is not None:
            c = np.asarray(self.cells, dtype=float)
            object.__setattr__(self, "cells", c)
            if not np.all(np.isin(p, c)):
                raise ConfigError("cell grid must contain every partition point")

    @classmethod
    def uniform(cls, T: float, dt: float, **kw) -> "SimConfig":
        return cls(T=T, partition=uniform_partition(T, dt), **kw)

    @property
    def d(self) -> int:
        return self.levy.d

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.partition))) if self.partition.size > 1 else 0.0

    @property
    def n_steps(self) -> int:
        return self.partition.size - 1

    @property
    def streams(self) -> StreamFamily:
        return StreamFamily(self.seed, dict(self.stream_overrides))

    def step_cells(self, k: int) -> list[Cell]:
        a, b = self.partition[k], self.partition[k + 1]
        if self.cells is None:
            return [Cell(k, a, b - a)]
        c = self.cells
        i0, i1 = int(np.searchsorted(c, a)), int(np.searchsorted(c, b))
        return [Cell(i, c[i], c[i + 1] - c[i]) for i in range(i0, i1)]


@dataclass(frozen=True)
class ParticleSystemState:
    time: float
    step: int
    positions: np.ndarray
    snapshot: MeasureSummary

    @classmethod
    def at(cls, t: float, step: int, positions: np.ndarray) -> "ParticleSystemState":
        positions = np.asarray(positions, dtype=float)
        positions.setflags(write=False)
        return cls(t, step, positions, MeasureSummary(positions))


def big_jump_scale(config: SimConfig) -> float:
    return tail_sigma(config.levy, config.coeffs, config.M, config.T)


def init_system(config: SimConfig) -> ParticleSystemState:
    streams = config.streams
    x0 = config.init.sample(config.N, config.d, streams)
    a = big_jump_scale(config)
    if a > 0:
        gauss = streams.normal("gauss", np.arange(config.N)[:, None], np.arange(config.d)[None, :])
        x0 = x0 + a * gauss
    return ParticleSystemState.at(0.0, 0, x0)


def _chunks(n: int) -> list[np.ndarray]:
    return [np.arange(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def events_for_step(state: ParticleSystemState, config: SimConfig) -> EventList:
    k = state.step
    dt = config.partition[k + 1] - config.partition[k]

    def gen(particles):
        return generate_step_events(config.levy, config.N, config.M, dt, config.streams,
                                    step_index=k, cells=config.step_cells(k), particles=particles,
                                    start=config.partition[k], sample_times=config.sample_times)

    parts = _map(gen, _chunks(config.N), config.threads)
    return _merge(parts, config)


def _merge(parts: list[EventList], config: SimConfig) -> EventList:
    if len(parts) == 1:
        return parts[0]
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
    times = cat("times") if config.sample_times else None
    return EventList(parts[0].interval, cat("owner"), cat("ring"), cat("draw"), cat("cell"),
                     cat("amplitude"), cat("partner"), cat("counts"), cat("particles"),
                     parts[0].seed, times)


def step_system(state: ParticleSystemState, events: EventList, config: SimConfig) -> ParticleSystemState:
    """Advance one step with all coefficient arguments frozen at r_k."""
    k = state.step
    r0, r1 = config.partition[k], config.partition[k + 1]
    if not (math.isclose(events.interval[0], r0, abs_tol=1e-12)
            and math.isclose(events.interval[1], r1, abs_tol=1e-12)):
        raise ValueError(f"events cover {events.interval}, step is [{r0}, {r1})")
    frozen = state.positions
    rho = state.snapshot
    coeffs = config.coeffs
    dt = r1 - r0
    starts = np.searchsorted(events.owner, np.arange(0, config.N + 1, CHUNK))

    def update(c):
        j, idx = c
        x = frozen[idx]
        new = x + coeffs.drift(r0, x, rho) * dt
        lo, hi = starts[j], starts[j + 1] if j + 1 < len(starts) else len(events)
        if hi > lo:
            owner = events.owner[lo:hi]
            inc = coeffs.jump(r0, frozen[events.partner[lo:hi]], events.amplitude[lo:hi], frozen[owner], rho)
            local = owner - idx[0]
            for dim in range(config.d):
                new[:, dim] += np.bincount(local, weights=inc[:, dim], minlength=idx.size)
        return new

    pieces = _map(update, list(enumerate(_chunks(config.N))), config.threads)
    new = np.concatenate(pieces, axis=0)
    bad = ~np.all(np.isfinite(new), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"particle {i} became non-finite at t={r1}; "
                             f"start {frozen[i].tolist()}, events {events.for_particle(i)} (partner indices 0-based)")
    return ParticleSystemState.at(r1, k + 1, new)


@dataclass
class RunResult:
    snapshots: dict
    final: ParticleSystemState
    total_events: int
    wall_time: float


def run_simulation(config: SimConfig, record_times: Iterable[float] = ()) -> RunResult:
    """Run over the whole partition, copying positions at ``record_times``."""
    t0 = time.perf_counter()
    wanted = sorted(set(float(t) for t in record_times))
    for t in wanted:
        if not np.any(np.isclose(config.partition, t, rtol=0, atol=1e-12)):
            raise ConfigError(f"record time {t} is not a grid point")
    state = init_system(config)
    snaps = {}

    def record(s):
        for t in wanted:
            if math.isclose(t, s.time, abs_tol=1e-12):
                snaps[t] = np.array(s.positions)

    record(state)
    total = 0
    for _ in range(config.n_steps):
        events = events_for_step(state, config)
        total += len(events)
        state = step_system(state, events, config)
        record(state)
    return RunResult(snaps, state, total, time.perf_counter() - t0)


def with_partition(config: SimConfig, partition: np.ndarray, **changes) -> SimConfig:
    return replace(config, partition=np.asarray(partition, dtype=float), **changes)


def replicate_step(state: ParticleSystemState, config: SimConfig, replicates: int,
                   seed: int = 0) -> np.ndarray:
    """``replicates`` independent one-step continuations of ``state``.

    Each continuation draws its events from its own stream family, so the
    results are i.i.d. given the frozen state.  Returns ``(R, N, d)``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    seeds = hash_address(seed, "replicate", np.arange(replicates))
    out = np.empty((replicates, config.N, config.d))
    for r, s in enumerate(seeds):
        cfg = replace(config, seed=int(s), cells=None)
        out[r] = step_system(state, events_for_step(state, cfg), cfg).positions
    return out
