import math

import numpy as np
import pytest
from scipy import stats

from jumpparticles.events import Cell, generate_step_events, poisson_inverse
from jumpparticles.models import alpha_stable_inverted, lebesgue
from jumpparticles.streams import StreamFamily


def gen(seed=0, N=100, M=3, dt=0.1, levy=None, **kw):
    return generate_step_events(levy or lebesgue(1), N, M, dt, StreamFamily(seed, kw.pop("overrides", {})), **kw)


def test_zero_step_is_empty():
    ev = gen(dt=0.0)
    assert len(ev) == 0 and ev.counts.sum() == 0


def test_expected_total_count():
    totals = np.array([len(gen(seed=s, step_index=0)) for s in range(1000)])
    assert abs(totals.mean() - 60) <= 3 * math.sqrt(60 / 1000)


def test_partner_uniformity_chi_square():
    partners = []
    s = 0
    while sum(map(len, partners)) < 100_000:
        partners.append(gen(seed=s, N=10, dt=5.0).partner)
        s += 1
    p = np.concatenate(partners)[:100_000]
    assert p.min() >= 0 and p.max() <= 9
    freq = np.bincount(p, minlength=10)
    assert stats.chisquare(freq).pvalue > 1e-3


def test_amplitudes_in_their_rings():
    ev = gen(N=500, M=5, dt=1.0)
    r = np.abs(ev.amplitude[:, 0])
    assert np.all((r > ev.ring - 1) & (r <= ev.ring))


def test_counts_match_events():
    ev = gen(N=200, M=4, dt=0.7)
    for k in range(1, 5):
        per = np.bincount(ev.owner[ev.ring == k], minlength=200)
        assert np.array_equal(per, ev.counts[:, k - 1])


def test_sorted_by_owner_then_ring():
    ev = gen(N=50, M=3, dt=2.0)
    key = ev.owner * 10 + ev.ring
    assert np.all(np.diff(key) >= 0)


def test_bit_identical_reruns():
    a, b = gen(seed=4), gen(seed=4)
    for f in ("owner", "ring", "draw", "amplitude", "partner", "counts"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_partner_stream_independence():
    a = gen(seed=4, dt=1.0)
    b = gen(seed=4, dt=1.0, overrides={"partner": 12345})
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.amplitude, b.amplitude)
    assert not np.array_equal(a.partner, b.partner)


def test_superposition_moments():
    totals = np.array([gen(seed=s, N=1, M=3, dt=0.5).counts.sum() for s in range(10_000)])
    lam = 6 * 0.5
    assert abs(totals.mean() - lam) <= 4 * math.sqrt(lam / totals.size)
    assert abs(totals.var() - lam) <= 4 * math.sqrt(2 * lam ** 2 / totals.size + lam / totals.size)


def test_cells_reproduce_finer_grid():
    levy = lebesgue(1)
    cells = [Cell(i, 0.1 * i, 0.1) for i in range(4)]
    coarse = generate_step_events(levy, 30, 2, 0.4, StreamFamily(1), cells=cells)
    fine = [generate_step_events(levy, 30, 2, 0.1, StreamFamily(1), cells=[c]) for c in cells]
    assert sum(len(f) for f in fine) == len(coarse)
    assert np.array_equal(sum(f.counts for f in fine), coarse.counts)
    got = np.sort(coarse.amplitude[:, 0])
    want = np.sort(np.concatenate([f.amplitude[:, 0] for f in fine]))
    assert np.array_equal(got, want)


def test_subset_of_particles_matches_full_generation():
    full = gen(seed=9, N=40, dt=1.0)
    part = gen(seed=9, N=40, dt=1.0, particles=np.array([3, 17, 29]))
    for i in (3, 17, 29):
        assert full.for_particle(i) == part.for_particle(i)


def test_empty_first_ring_skipped():
    ev = gen(levy=alpha_stable_inverted(0.5), N=100, M=3, dt=1.0)
    assert not np.any(ev.ring == 1)
    assert np.all(np.abs(ev.amplitude) >= 1)


def test_sampled_times_inside_step():
    ev = gen(N=50, dt=0.3, sample_times=True, start=2.0)
    assert np.all((ev.times >= 2.0) & (ev.times < 2.3))


def test_ring_cutoff_checked():
    with pytest.raises(ValueError):
        gen(M=100)


def test_poisson_inverse_law():
    u = StreamFamily(0).uniform("count", np.arange(200_000))
    n = poisson_inverse(u, 2.5)
    freq = np.bincount(n, minlength=12)[:12]
    expected = stats.poisson.pmf(np.arange(12), 2.5) * u.size
    keep = expected > 5
    chi2 = ((freq[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3
    assert np.all(poisson_inverse(u[:10], 0.0) == 0)
