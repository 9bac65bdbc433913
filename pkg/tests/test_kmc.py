import itertools
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_INITIAL
from qkinetics.kmc import (
    AbsorbingState,
    CapacityError,
    ChannelTable,
    CollisionChannel,
    DivergentDistribution,
    ModeLattice,
    OccupationConfig,
    Trajectory,
    channel_array,
    detailed_balance_residual,
    enumerate_channels,
    enumerate_shell,
    ensemble,
    event_states,
    grand_canonical_mode_factors,
    grand_canonical_normalizable,
    grand_canonical_weight,
    kmc_step,
    mean_occupation_rhs_exact,
    occupation_histogram,
    rate_minus,
    rate_plus,
    rate_table,
    simulate,
    stationary_exact,
    total_rate,
    trajectory_rng,
)
from qkinetics.constants import HBAR, KB


# -- lattice and channels ------------------------------------------------------

def test_lattice_energies_match_dispersion(cube1):
    k = cube1.wavevectors
    hw = HBAR**2 * np.sum(k * k, axis=1) / (2 * cube1.mass)
    np.testing.assert_allclose(cube1.hbar_omega, hw, rtol=1e-14)
    assert cube1.energies.dtype.kind == "i"


def test_lattice_rejects_duplicates():
    with pytest.raises(ValueError):
        ModeLattice(np.array([(1, 0, 0), (1, 0, 0)]))


def test_no_channel_when_energy_fails():
    lat = ModeLattice(np.array([(0, 0, 0), (1, 0, 0), (-1, 0, 0)]))
    assert enumerate_channels(lat) == []


def test_axis_exchange_channel_present(four_mode_lattice, four_mode_channels):
    idx = {tuple(z): i for i, z in enumerate(four_mode_lattice.modes.tolist())}
    pair_a = {idx[(1, 0, 0)], idx[(-1, 0, 0)]}
    pair_b = {idx[(0, 1, 0)], idx[(0, -1, 0)]}
    found = [c for c in four_mode_channels
             if {frozenset(c.indices[:2]), frozenset(c.indices[2:])}
             == {frozenset(pair_a), frozenset(pair_b)}]
    assert len(found) == 1


def _oracle_channel_count(lattice):
    """Independent vectorized O(M^4) scan, canonicalized by integer codes."""
    z = lattice.modes
    e = lattice.energies
    M = len(z)
    codes = []
    i2, i3, i4 = np.meshgrid(np.arange(M), np.arange(M), np.arange(M), indexing="ij")
    i2, i3, i4 = i2.ravel(), i3.ravel(), i4.ravel()
    lhs_e = e[i3] + e[i4] - e[i2]
    for i1 in range(M):
        cand = np.flatnonzero(lhs_e == e[i1])
        b, c, d = i2[cand], i3[cand], i4[cand]
        ok = np.all(z[i1] + z[b] == z[c] + z[d], axis=1)
        a, b, c, d = np.full(ok.sum(), i1), b[ok], c[ok], d[ok]
        p = np.minimum(a, b) * M + np.maximum(a, b)
        q = np.minimum(c, d) * M + np.maximum(c, d)
        keep = p != q
        p, q = p[keep], q[keep]
        codes.append(np.minimum(p, q) * M * M + np.maximum(p, q))
    return len(np.unique(np.concatenate(codes)))


@pytest.mark.parametrize("z_max", [1, 2])
def test_channel_count_matches_brute_force(z_max):
    lat = ModeLattice.cube(z_max)
    chans = enumerate_channels(lat)
    assert len(chans) == _oracle_channel_count(lat)
    if z_max == 1:
        assert len(chans) == 288


def test_channels_conserve_exactly_and_are_unique(cube1, cube1_channels):
    z, e = cube1.modes, cube1.energies
    seen = set()
    for c in cube1_channels:
        i1, i2, i3, i4 = c.indices
        assert np.array_equal(z[i1] + z[i2], z[i3] + z[i4])
        assert e[i1] + e[i2] == e[i3] + e[i4]
        key = frozenset([frozenset([i1, i2]), frozenset([i3, i4])])
        assert key not in seen
        seen.add(key)
    assert list(cube1_channels) == sorted(cube1_channels)


def test_channel_guard():
    with pytest.raises(CapacityError):
        enumerate_channels(ModeLattice.cube(2), max_channels=100)


def test_occupation_config_caches(cube1, cube1_channels):
    rng = np.random.default_rng(1)
    cfg = OccupationConfig(rng.integers(0, 4, len(cube1)), cube1)
    assert cfg.caches_consistent()
    for c in cube1_channels[:50]:
        try:
            new = cfg.apply(c, -1)
        except ValueError:
            continue
        assert (new.N, new.E, new.P) == (cfg.N, cfg.E, cfg.P)
        assert new.caches_consistent()
    with pytest.raises(ValueError):
        OccupationConfig([-1] + [0] * (len(cube1) - 1), cube1)


# -- rates ---------------------------------------------------------------------

CH = CollisionChannel((0, 1, 2, 3))


@pytest.mark.parametrize("n,expected", [((1, 1, 0, 0), 1.0), ((0, 5, 9, 9), 0.0), ((2, 3, 1, 0), 12.0)])
def test_rate_minus_examples(n, expected):
    assert rate_minus(np.array(n), CH, 1.0) == expected


@pytest.mark.parametrize("n,expected", [((0, 0, 1, 1), 1.0), ((4, 4, 0, 1), 0.0)])
def test_rate_plus_examples(n, expected):
    assert rate_plus(np.array(n), CH, 1.0) == expected


def test_rates_scale_with_gamma():
    n = np.array((2, 3, 1, 0))
    assert rate_minus(n, CH, 2.5) == 2.5 * rate_minus(n, CH, 1.0)


def test_same_mode_pair_ladder_factors():
    ch = CollisionChannel((0, 0, 1, 2))
    n = np.array((1, 0, 0))
    assert rate_minus(n, ch) == 0  # one particle cannot leave a pair
    n = np.array((3, 2, 5))
    assert rate_minus(n, ch) == 3 * 2 * 3 * 6
    assert rate_plus(n, ch) == 4 * 5 * 2 * 5


def test_rate_table_matches_scalar(cube1, cube1_channels):
    rng = np.random.default_rng(2)
    states = rng.integers(0, 5, size=(10, len(cube1)))
    chan = channel_array(cube1_channels)
    plus, minus = rate_table(states, chan, 0.7)
    for s in range(10):
        for c in range(0, len(chan), 17):
            assert plus[s, c] == pytest.approx(rate_plus(states[s], chan[c], 0.7))
            assert minus[s, c] == pytest.approx(rate_minus(states[s], chan[c], 0.7))
    assert total_rate(states[0], chan, 0.7) == pytest.approx(plus[0].sum() + minus[0].sum())


def test_rate_identity_random(cube1, cube1_channels):
    rng = np.random.default_rng(3)
    for _ in range(2000):
        c = cube1_channels[rng.integers(len(cube1_channels))]
        n = rng.integers(0, 6, len(cube1))
        for i in c.indices[:2]:
            n[i] += 2
        cfg = OccupationConfig(n, cube1)
        assert rate_plus(cfg.apply(c, -1), c) == rate_minus(cfg, c)


# -- stepping ------------------------------------------------------------------

def test_forced_single_move(four_mode_lattice, four_mode_channels):
    ch = four_mode_channels[0]
    n = np.zeros(4, dtype=np.int64)
    n[list(ch.indices[:2])] = 1
    cfg = OccupationConfig(n, four_mode_lattice)
    dt, (picked, sign), new = kmc_step(cfg, [ch], 1.0, np.random.default_rng(0))
    assert picked == ch and sign == -1 and dt > 0
    expected = np.zeros(4, dtype=np.int64)
    expected[list(ch.indices[2:])] = 1
    np.testing.assert_array_equal(new.n, expected)


def test_kmc_step_absorbing(four_mode_lattice, four_mode_channels):
    cfg = OccupationConfig([1, 0, 0, 0], four_mode_lattice)
    with pytest.raises(AbsorbingState):
        kmc_step(cfg, four_mode_channels, 1.0, np.random.default_rng(0))


def test_kmc_step_conserves(cube1, cube1_channels):
    rng = np.random.default_rng(4)
    cfg = OccupationConfig(np.where(cube1.energies == 1, 3, 0), cube1)
    start = (cfg.N, cfg.E, cfg.P)
    for _ in range(500):
        _, _, cfg = kmc_step(cfg, cube1_channels, 1.0, rng)
        assert cfg.caches_consistent()
        assert (cfg.N, cfg.E, cfg.P) == start


def test_kmc_step_direction_frequencies(small_lattice, small_table):
    cfg = OccupationConfig([3, 2, 1, 1, 2, 0, 2, 1], small_lattice)
    chans = list(small_table.channels)
    plus, minus = rate_table(cfg.n, small_table.chan)
    p = np.empty(2 * len(chans))
    p[0::2], p[1::2] = plus[0], minus[0]
    p /= p.sum()
    rng = np.random.default_rng(5)
    n_draw = 100_000
    counts = np.zeros(len(p))
    waits = np.empty(n_draw)
    for k in range(n_draw):
        dt, (ch, sign), _ = kmc_step(cfg, chans, 2.0, rng)
        counts[2 * chans.index(ch) + (0 if sign == 1 else 1)] += 1
        waits[k] = dt
    sigma = np.sqrt(n_draw * p * (1 - p))
    assert np.all(np.abs(counts - n_draw * p) <= 3 * sigma + 1e-12)
    rate = 2.0 * total_rate(cfg, small_table.chan)
    assert waits.mean() == pytest.approx(1 / rate, rel=3 / math.sqrt(n_draw) * 1.5)


def test_python_step_matches_kernel(small_lattice, small_table):
    cfg = OccupationConfig(ACCEPTANCE_INITIAL, small_lattice)
    dt, (ch, sign), new = kmc_step(cfg, small_table.chan, 1.5, trajectory_rng(11))
    traj = Trajectory(small_table, cfg, 1.5, trajectory_rng(11))
    dts, codes, _ = traj.run_events(1)
    assert dts[0] == pytest.approx(dt, rel=1e-12)
    np.testing.assert_array_equal(traj.n, new.n)


def test_kernel_conserves_over_many_events(small_lattice, small_table):
    cfg = OccupationConfig(ACCEPTANCE_INITIAL, small_lattice)
    traj = Trajectory(small_table, cfg, 1.0, trajectory_rng(0))
    _, codes, status = traj.run_events(200_000)
    states = event_states(cfg, small_table, codes)
    assert np.all(states >= 0)
    assert np.all(states.sum(axis=1) == cfg.N)
    assert np.all(states @ small_lattice.energies == cfg.E)
    assert np.all(states @ small_lattice.modes == np.asarray(cfg.P))
    np.testing.assert_array_equal(states[-1], traj.n)
    # lazily built dense increments agree with the incremental reconstruction
    np.testing.assert_array_equal(small_table.deltas[codes[:100]].cumsum(axis=0) + cfg.n, states[:100])


# -- simulate ------------------------------------------------------------------

def test_simulate_t_end_zero(small_lattice, small_table):
    cfg = OccupationConfig(ACCEPTANCE_INITIAL, small_lattice)
    run = simulate(cfg, small_lattice, 1.0, 0.0, seed=1, channels=small_table)
    assert len(run.sample_times) == 1 and run.n_events == 0
    np.testing.assert_array_equal(run.occupations[0], cfg.n)


def test_simulate_deterministic(cube1, cube1_table):
    cfg = OccupationConfig(np.where(cube1.energies == 1, 2, 0), cube1)
    times = np.linspace(0, 2, 9)
    a = simulate(cfg, cube1, 1.0, 2.0, seed=42, sample_times=times, channels=cube1_table)
    b = simulate(cfg, cube1, 1.0, 2.0, seed=42, sample_times=times, channels=cube1_table)
    c = simulate(cfg, cube1, 1.0, 2.0, seed=43, sample_times=times, channels=cube1_table)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert np.all(a.N == cfg.N) and np.all(a.E == cfg.E)
    assert a.n0[0] == 0 and not a.truncated
    rows = list(a.rows(per_mode=False))
    assert set(rows[0]) == {"time", "N", "E", "P_x", "P_y", "P_z", "n_0"}


def test_ensemble_threads_do_not_change_results(cube1, cube1_table):
    cfg = OccupationConfig(np.where(cube1.energies == 1, 2, 0), cube1)
    one = ensemble(cfg, cube1, 1.0, 1.0, 9, 4, channels=cube1_table, threads=1)
    many = ensemble(cfg, cube1, 1.0, 1.0, 9, 4, channels=cube1_table, threads=3)
    assert [r.digest() for r in one] == [r.digest() for r in many]
    assert len({r.digest() for r in one}) == 4


def test_simulate_flags_absorbing_run(four_mode_lattice, four_mode_channels):
    cfg = OccupationConfig([1, 0, 0, 0], four_mode_lattice)
    run = simulate(cfg, four_mode_lattice, 1.0, 3.0, seed=0, sample_times=[0, 1, 3],
                   channels=four_mode_channels)
    assert run.status == "absorbed" and run.truncated
    assert np.all(run.occupations == cfg.n)


def test_simulate_validates_sample_times(small_lattice, small_table):
    cfg = OccupationConfig(ACCEPTANCE_INITIAL, small_lattice)
    with pytest.raises(ValueError):
        simulate(cfg, small_lattice, 1.0, 1.0, 0, sample_times=[0.5, 0.2], channels=small_table)


def test_four_mode_time_average_matches_exact(four_mode_lattice, four_mode_channels):
    cfg = OccupationConfig([1, 1, 0, 0], four_mode_lattice)
    exact = stationary_exact(four_mode_lattice, 2, 2, (0, 0, 0), four_mode_channels)
    states, probs = exact.component_of(cfg)
    exact_mean = probs @ states
    s, w = occupation_histogram(cfg, four_mode_lattice, 1.0, 200_000, seed=3,
                                channels=four_mode_channels)
    np.testing.assert_allclose(w @ s, exact_mean, rtol=0.02)


# -- stationary ----------------------------------------------------------------

def test_single_state_shell(four_mode_lattice, four_mode_channels):
    d = stationary_exact(four_mode_lattice, 1, 1, (1, 0, 0), four_mode_channels)
    assert len(d.states) == 1 and d.probs[0] == 1.0


def test_shell_enumeration_against_product_scan(small_lattice):
    states = enumerate_shell(small_lattice, 6, 7, (0, 0, 0))
    brute = [n for n in itertools.product(range(7), repeat=len(small_lattice))
             if sum(n) == 6 and np.dot(n, small_lattice.energies) == 7
             and np.all(np.dot(n, small_lattice.modes) == 0)]
    assert sorted(map(tuple, states.tolist())) == sorted(brute)


def test_shell_capacity_guard(cube1):
    with pytest.raises(CapacityError):
        enumerate_shell(cube1, 8, 12, (0, 0, 0), limit=100)


def test_stationary_uniform_and_balanced(small_lattice, small_table):
    d = stationary_exact(small_lattice, 24, 26, (0, 0, 0), small_table.chan)
    assert d.uniform_deviation() < 1e-10
    assert d.stationarity_residual() < 1e-12
    assert detailed_balance_residual(d, small_table.chan) < 1e-12
    for lab in range(d.n_components):
        _, p = d.component(lab)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_disconnected_shell_has_labels(four_mode_lattice, four_mode_channels):
    # (2,0,1,1)... every shell here is small; a shell with unreachable pieces
    d = stationary_exact(four_mode_lattice, 4, 4, (0, 0, 0), four_mode_channels)
    assert d.n_components >= 1
    assert d.uniform_deviation() < 1e-10


def test_cube_shell_stationary(cube1, cube1_table):
    d = stationary_exact(cube1, 4, 4, (0, 0, 0), cube1_table.chan)
    assert d.uniform_deviation() < 1e-10
    assert detailed_balance_residual(d, cube1_table.chan) < 1e-12


# -- grand canonical -----------------------------------------------------------

def test_grand_canonical_high_temperature(cube1):
    cfg = OccupationConfig(np.arange(len(cube1)) % 3, cube1)
    assert grand_canonical_weight(cfg, 1e12, -1e-40) == pytest.approx(1.0, abs=1e-9)


def test_grand_canonical_factorizes(cube1):
    T = 2 * cube1.epsilon0 / KB
    mu = -0.5 * cube1.epsilon0
    u = np.array([1e-4, -2e-4, 0.5e-4])
    cfg = OccupationConfig(np.random.default_rng(6).integers(0, 3, len(cube1)), cube1)
    f = grand_canonical_mode_factors(cube1, T, mu, u)
    assert np.prod(f ** cfg.n) == pytest.approx(grand_canonical_weight(cfg, T, mu, u), rel=1e-12)


def test_grand_canonical_channel_invariance(cube1, cube1_channels):
    T = 3 * cube1.epsilon0 / KB
    cfg = OccupationConfig(np.full(len(cube1), 2), cube1)
    w0 = grand_canonical_weight(cfg, T, -cube1.epsilon0, np.array([1e-4, 0, 0]))
    for c in cube1_channels[::29]:
        w1 = grand_canonical_weight(cfg.apply(c, -1), T, -cube1.epsilon0, np.array([1e-4, 0, 0]))
        assert w1 / w0 == pytest.approx(1.0, rel=1e-14)


def test_grand_canonical_divergence(cube1):
    cfg = OccupationConfig(np.zeros(len(cube1), dtype=int), cube1)
    assert not grand_canonical_normalizable(cube1, 0.0)
    with pytest.raises(DivergentDistribution):
        grand_canonical_weight(cfg, 1e-6, 0.0)
    lat = ModeLattice(np.array([(1, 0, 0), (0, 1, 0)]))
    assert grand_canonical_normalizable(lat, 0.5 * lat.epsilon0)


# -- exact mean-occupation rhs -------------------------------------------------

def test_mean_rhs_on_delta_matches_direct_sum(cube1, cube1_channels):
    n = np.random.default_rng(7).integers(0, 4, len(cube1))
    for a in (0, 4, 13, 20):
        direct = 0.0
        for c in cube1_channels:
            i1, i2, i3, i4 = c.indices
            nu = (i1 == a) + (i2 == a) - (i3 == a) - (i4 == a)
            if nu:
                direct += nu * (rate_plus(n, c) - rate_minus(n, c))
        got = mean_occupation_rhs_exact(n[None, :], [1.0], a, cube1_channels)
        assert got == pytest.approx(direct, abs=1e-12)


def test_mean_rhs_vanishes_at_stationarity(small_lattice, small_table):
    d = stationary_exact(small_lattice, 24, 26, (0, 0, 0), small_table.chan)
    states, probs = d.component_of(ACCEPTANCE_INITIAL)
    for a in range(len(small_lattice)):
        assert abs(mean_occupation_rhs_exact(states, probs, a, small_table.chan)) < 1e-9


def test_mean_rhs_matches_ensemble_derivative(small_lattice, small_table):
    cfg = OccupationConfig(ACCEPTANCE_INITIAL, small_lattice)
    h, n_traj = 2e-4, 10_000
    runs = ensemble(cfg, small_lattice, 1.0, h, seed=21, n_traj=n_traj, channels=small_table)
    final = np.array([r.occupations[-1] for r in runs], dtype=float)
    deriv = (final.mean(axis=0) - cfg.n) / h
    sigma = final.std(axis=0, ddof=1) / math.sqrt(n_traj) / h
    for a in range(len(small_lattice)):
        exact = mean_occupation_rhs_exact(cfg.n[None, :], [1.0], a, small_table.chan)
        assert abs(deriv[a] - exact) <= 3 * sigma[a] + 1e-9
