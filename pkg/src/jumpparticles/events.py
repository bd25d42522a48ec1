"""Jump events of the compound-Poisson representation, one time step at a time.

For particle i and ring k the number of jumps in a cell of length l is
Poisson(mu(I_k) l).  Each jump carries an amplitude z in I_k and an
interaction partner u uniform on {0, ..., N-1}.  All draws come from
counter-based streams addressed by (cell, particle, ring, draw index), so a
step made of several cells sees exactly the events a finer grid would see
in those cells.  That is the common-random-number coupling used by
partition-refinement studies.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .levy import LevyMeasureModel
from .streams import StreamFamily


@dataclass(frozen=True)
class Cell:
    index: int
    start: float
    length: float


@dataclass(frozen=True)
class EventList:
    """Events of one step, sorted by (owner, cell, ring, draw).

    ``partner`` holds 0-based particle indices.  ``counts[i, k-1]`` is the
    number of ring-k events of particle i over the whole step.
    """

    interval: tuple
    owner: np.ndarray
    ring: np.ndarray
    draw: np.ndarray
    cell: np.ndarray
    amplitude: np.ndarray
    partner: np.ndarray
    counts: np.ndarray
    particles: np.ndarray
    seed: int
    times: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.owner.size)

    def for_particle(self, i: int) -> dict:
        sel = self.owner == i
        return {"ring": self.ring[sel].tolist(), "amplitude": self.amplitude[sel].tolist(),
                "partner": self.partner[sel].tolist()}


@lru_cache(maxsize=1024)
def _poisson_cdf(lam: float) -> np.ndarray:
    kmax = int(lam + 12 * np.sqrt(lam) + 30)
    cdf = stats.poisson.cdf(np.arange(kmax + 1), lam)
    cdf[-1] = 1.0
    return cdf


def poisson_inverse(u: np.ndarray, lam: float) -> np.ndarray:
    """Inverse-CDF Poisson variates: smallest n with P(X <= n) >= u."""
    if lam <= 0:
        return np.zeros(np.shape(u), dtype=np.int64)
    return np.searchsorted(_poisson_cdf(float(lam)), u, side="left").astype(np.int64)


def _empty(levy: LevyMeasureModel, interval, n_particles: int, M: int, particles, seed) -> EventList:
    z = np.zeros(0, dtype=np.int64)
    return EventList(interval, z, z, z, z, np.zeros((0, levy.d)), z,
                     np.zeros((n_particles, M), dtype=np.int64), particles, seed)


def generate_step_events(levy: LevyMeasureModel, N: int, M: int, dt: float,
                         streams: StreamFamily, step_index: int = 0,
                         cells: Optional[Sequence[Cell]] = None,
                         particles: Optional[np.ndarray] = None,
                         start: float = 0.0, sample_times: bool = False) -> EventList:
    """Draw the events of one step for ``particles`` (default: all N).

    ``cells`` splits the step into addressable sub-intervals; by default the
    step is the single cell ``step_index`` of length ``dt``.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if M > levy.max_ring:
        raise ValueError(f"ring cutoff M={M} exceeds the model's max_ring={levy.max_ring}")
    if cells is None:
        cells = [Cell(step_index, start, dt)]
    particles = np.arange(N) if particles is None else np.asarray(particles, dtype=np.int64)
    interval = (cells[0].start, cells[-1].start + cells[-1].length)
    rings = [k for k in range(1, M + 1) if levy.annulus_mass(k) > 0]
    counts = np.zeros((particles.size, M), dtype=np.int64)
    if dt == 0 or particles.size == 0 or not rings:
        return _empty(levy, interval, particles.size, M, particles, streams.seed)

    parts = []
    for cell in cells:
        if cell.length <= 0:
            continue
        for k in rings:
            u = streams.uniform("count", cell.index, particles, k)
            n = poisson_inverse(u, levy.annulus_mass(k) * cell.length)
            counts[:, k - 1] += n
            total = int(n.sum())
            if total == 0:
                continue
            owner = np.repeat(particles, n)
            offsets = np.repeat(np.cumsum(n) - n, n)
            draw = np.arange(total) - offsets
            amp = levy.sample_in_annulus(k, streams.view("amp", cell.index, owner, k, draw))
            up = streams.uniform("partner", cell.index, owner, k, draw)
            partner = np.minimum((up * N).astype(np.int64), N - 1)
            times = None
            if sample_times:
                times = cell.start + cell.length * streams.uniform("time", cell.index, owner, k, draw)
            parts.append((owner, np.full(total, k), draw, np.full(total, cell.index), amp, partner, times))

    if not parts:
        return _empty(levy, interval, particles.size, M, particles, streams.seed)
    owner, ring, draw, cell_ix, amp, partner = (np.concatenate([p[j] for p in parts]) for j in range(6))
    times = np.concatenate([p[6] for p in parts]) if sample_times else None
    order = np.lexsort((draw, ring, cell_ix, owner))
    return EventList(interval, owner[order], ring[order], draw[order], cell_ix[order],
                     amp[order], partner[order], counts, particles, streams.seed,
                     None if times is None else times[order])
