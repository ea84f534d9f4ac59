import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings, strategies as st

from ndsic.errors import ConfigurationError, DomainError
from ndsic.phy import (
    ArrivingPacket,
    PhyConfig,
    decode_batch,
    expected_unpack_prob,
    expected_unpack_prob_with_error,
    max_unpack_count,
    mpr_sic_decode,
    pbar_table,
    received_power,
    sample_sector_distances,
    sic_decode,
    unpack_prob_samples,
)
from ndsic.rng import RngStream

PERFECT = PhyConfig(sic_mode="perfect")
NEAR = 0.125 / (4 * math.pi)


def pk(powers, mods=None):
    mods = mods or [1] * len(powers)
    return [ArrivingPacket(i, p, m) for i, (p, m) in enumerate(zip(powers, mods))]


# -- received power ---------------------------------------------------------

def test_received_power_values():
    phy = PhyConfig()
    assert received_power(NEAR, phy) == pytest.approx(1.0)
    assert received_power(800.0, phy) == pytest.approx(1.546e-10, rel=1e-3)
    assert received_power(400.0, phy) / received_power(800.0, phy) == pytest.approx(4.0)
    boosted = PhyConfig(tx_power=2.0, gain_tx=3.0, gain_rx=0.5)
    assert received_power(800.0, boosted) == pytest.approx(3.0 * received_power(800.0, phy))


def test_received_power_near_field_rejected():
    with pytest.raises(DomainError):
        received_power(NEAR / 2, PhyConfig())


@settings(max_examples=50, deadline=None)
@given(st.floats(NEAR, 1e4), st.floats(1.0001, 10.0))
def test_received_power_strictly_decreasing(d, k):
    phy = PhyConfig()
    assert received_power(d * k, phy) < received_power(d, phy)


@pytest.mark.parametrize("kw", [{"beta": 0}, {"lambda0": -1}, {"xi": 1.5}, {"noise_floor": -1}])
def test_phy_config_validation(kw):
    with pytest.raises(ConfigurationError):
        PhyConfig(**kw)


# -- decoding examples ------------------------------------------------------

def test_empty_and_single():
    assert sic_decode([], PERFECT).decoded == ()
    out = sic_decode(pk([3.0]), PERFECT)
    assert out.decoded == (0,) and out.dropped == frozenset()


def test_threshold_equality_decodes_both():
    out = sic_decode(pk([1.0, 4.0]), PERFECT)
    assert out.decoded == (1, 0)


def test_chain_stops_at_first_failure():
    out = sic_decode(pk([16.0, 4.0, 1.0]), PERFECT)
    assert out.decoded == ()
    assert out.dropped == {0, 1, 2}


def test_imperfect_residual_blocks_second():
    phy = PhyConfig(sic_mode="imperfect", xi=0.04)
    packets = pk([25.0, 1.0])
    out = sic_decode(packets, phy)
    assert out.decoded == (0,)
    assert out.dropped == {1}


def test_no_sic_collision_drops_all():
    phy = PhyConfig()
    assert sic_decode(pk([100.0, 1.0]), phy).decoded == ()
    assert sic_decode(pk([1.0]), phy).decoded == (0,)


def test_power_tie_broken_by_sender():
    packets = [ArrivingPacket(7, 4.0), ArrivingPacket(3, 4.0), ArrivingPacket(5, 0.5)]
    out = sic_decode(packets, PhyConfig(beta=0.5, sic_mode="perfect"))
    assert out.decoded[:2] == (3, 7)


def test_mpr_examples():
    phy = PhyConfig(sic_mode="perfect", mpr_modulations=2)
    assert set(mpr_sic_decode(pk([1.0, 1e6], [1, 2]), phy).decoded) == {0, 1}
    out = mpr_sic_decode(pk([16.0, 1.0, 1e-6], [1, 1, 2]), phy)
    assert set(out.decoded) == {0, 1, 2}
    with pytest.raises(DomainError):
        mpr_sic_decode(pk([1.0], [3]), phy)


def test_mpr_lone_packet_ignores_noise():
    phy = PhyConfig(sic_mode="imperfect", noise_floor=10.0, mpr_modulations=2)
    assert mpr_sic_decode(pk([1.0, 2.0], [1, 2]), phy).decoded == (0, 1)
    # without MPR the same noise stops a lone packet
    single = PhyConfig(sic_mode="imperfect", noise_floor=10.0)
    assert sic_decode(pk([1.0]), single).decoded == ()


# -- n0 ---------------------------------------------------------------------

def test_max_unpack_count_values():
    assert max_unpack_count(PhyConfig(beta=4), 800) == 15
    assert max_unpack_count(PhyConfig(beta=1), 800) == 34
    # log argument equal to one
    r = 0.125 * math.sqrt(4) / (4 * math.pi)
    assert max_unpack_count(PhyConfig(beta=4), r) == 2
    assert max_unpack_count(PhyConfig(beta=1e300), 800) == 1


def _min_spread_chain(m, beta):
    """Weakest-first powers that just satisfy every link of an m-chain."""
    p = [1.0]
    for _ in range(m - 1):
        p.append(beta * sum(p))
    return p[::-1]


@pytest.mark.parametrize("beta", [1.0, 4.0])
def test_n0_is_tight(beta):
    phy = PhyConfig(beta=beta, sic_mode="perfect")
    n0 = max_unpack_count(phy, 800)
    ratio = received_power(NEAR, phy) / received_power(800, phy)
    chain = _min_spread_chain(n0, beta)
    assert chain[0] / chain[-1] <= ratio * (1 + 1e-9)
    assert len(sic_decode(pk(chain), phy).decoded) == n0
    longer = _min_spread_chain(n0 + 1, beta)
    assert longer[0] / longer[-1] > ratio


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40), st.sampled_from([1.0, 4.0]))
def test_decode_count_bounded_by_n0(u, beta):
    phy = PhyConfig(beta=beta, sic_mode="perfect")
    # log-uniform distances spread the powers as widely as possible
    d = NEAR * (800 / NEAR) ** np.asarray(u)
    out = sic_decode(pk(list(received_power(d, phy) * np.ones(len(d)))), phy)
    assert len(out.decoded) <= max_unpack_count(phy, 800)


# -- properties ---------------------------------------------------------------

powers_st = st.lists(st.floats(1e-6, 1e6), min_size=0, max_size=12)


@settings(max_examples=300, deadline=None)
@given(powers_st, st.sampled_from([0.5, 1.0, 4.0, 10.0]))
def test_prefix_property(powers, beta):
    phy = PhyConfig(beta=beta, sic_mode="perfect")
    packets = pk(powers)
    out = sic_decode(packets, phy)
    order = [p.sender for p in sorted(packets, key=lambda p: (-p.power, p.sender))]
    assert list(out.decoded) == order[: len(out.decoded)]
    assert set(out.decoded) | out.dropped == set(range(len(powers)))
    assert not set(out.decoded) & out.dropped


@settings(max_examples=300, deadline=None)
@given(powers_st, st.sampled_from([1.0, 4.0]))
def test_imperfect_zero_residual_equals_perfect(powers, beta):
    packets = pk(powers)
    a = sic_decode(packets, PhyConfig(beta=beta, sic_mode="perfect"))
    b = sic_decode(packets, PhyConfig(beta=beta, sic_mode="imperfect", xi=0.0, noise_floor=0.0))
    assert a == b


@settings(max_examples=200, deadline=None)
@given(powers_st, st.sampled_from(["none", "perfect", "imperfect"]))
def test_single_modulation_mpr_equals_sic(powers, mode):
    phy = PhyConfig(sic_mode=mode, xi=0.1)
    assert mpr_sic_decode(pk(powers), phy) == sic_decode(pk(powers), phy)


@settings(max_examples=200, deadline=None)
@given(powers_st, st.data())
def test_removing_dropped_packet_never_hurts(powers, data):
    packets = pk(powers)
    out = sic_decode(packets, PERFECT)
    if not out.dropped:
        return
    victim = data.draw(st.sampled_from(sorted(out.dropped)))
    rest = [p for p in packets if p.sender != victim]
    assert set(out.decoded) <= set(sic_decode(rest, PERFECT).decoded)


@settings(max_examples=200, deadline=None)
@given(powers_st, st.sampled_from([0.0, 0.01, 0.3]))
def test_perfect_dominates_imperfect(powers, xi):
    packets = pk(powers)
    weak = sic_decode(packets, PhyConfig(sic_mode="imperfect", xi=xi))
    assert set(weak.decoded) <= set(sic_decode(packets, PERFECT).decoded)


receptions_st = st.lists(
    st.tuples(st.integers(0, 5), st.floats(1e-6, 1e3), st.integers(1, 3)), min_size=0, max_size=40
)


@settings(max_examples=300, deadline=None)
@given(
    receptions_st,
    st.sampled_from(["none", "perfect", "imperfect"]),
    st.sampled_from([1, 3]),
    st.sampled_from([0.0, 0.05]),
    st.sampled_from([0.0, 0.5]),
)
def test_batch_decoder_matches_reference(rows, mode, h, xi, noise):
    phy = PhyConfig(sic_mode=mode, xi=xi, noise_floor=noise, mpr_modulations=h)
    receiver = np.array([r for r, _, _ in rows], dtype=np.int64)
    power = np.array([p for _, p, _ in rows])
    mod = np.array([m if h > 1 else 1 for _, _, m in rows], dtype=np.int64)
    sender = np.arange(len(rows))
    group = receiver * h + (mod - 1) if h > 1 else receiver
    mask = decode_batch(group, sender, power, phy, lone_always=h > 1)
    for rcv in set(receiver.tolist()):
        sel = np.flatnonzero(receiver == rcv)
        packets = [ArrivingPacket(int(i), float(power[i]), int(mod[i])) for i in sel]
        ref = mpr_sic_decode(packets, phy)
        assert set(sender[sel][mask[sel]].tolist()) == set(ref.decoded)


# -- unpack probability -------------------------------------------------------

def test_pbar_fixed_distance_example():
    for d1 in (1.0, 200.0, 799.0):
        v = unpack_prob_samples(np.array([[d1, 800.0]]), 4.0, 800.0)
        assert v[0] == pytest.approx(0.375)


def test_pbar_edges():
    rng = RngStream(1)
    assert expected_unpack_prob(1, PERFECT, 800, rng) == 1.0
    assert expected_unpack_prob(16, PERFECT, 800, rng, samples=100) == 0.0
    with pytest.raises(DomainError):
        expected_unpack_prob(0, PERFECT, 800, rng)


def test_pbar_reproducible_and_cached():
    rng = RngStream(9, ("a",))
    a = expected_unpack_prob(3, PERFECT, 800, rng, samples=5000)
    b = expected_unpack_prob(3, PERFECT, 800, RngStream(9, ("a",)), samples=5000)
    assert a == b


def test_pbar_monotone_and_bounded():
    rng = RngStream(2, ("mono",))
    n0 = max_unpack_count(PERFECT, 800)
    prev, prev_err = 1.0, 0.0
    for m in range(1, n0 + 1):
        v, err = expected_unpack_prob_with_error(m, PERFECT, 800, rng, samples=20_000)
        assert 0.0 <= v <= 1.0
        assert v <= prev + 3 * math.hypot(err, prev_err)
        prev, prev_err = v, err


def test_pbar_m2_matches_quadrature():
    # independent oracle: integrate the two-point closed form over the radial density
    r, beta = 800.0, 4.0
    d_min = NEAR
    span = r**2 - d_min**2
    # d2 is the larger of two draws with cdf F(x) = (x^2 - d_min^2) / span,
    # and for sorted (d1 <= d2) the sample value is 1.5 * d2^2 / (beta r^2), clamped
    value = lambda x: min(1.5 * x**2 / (beta * r**2), 1.0)
    density = lambda x: 2 * (x**2 - d_min**2) / span * 2 * x / span
    exact, _ = quad(lambda x: value(x) * density(x), d_min, r)
    est = expected_unpack_prob(2, PERFECT, r, RngStream(4), samples=100_000)
    assert est == pytest.approx(exact, abs=0.005)


def test_sector_distances_sorted_and_bounded():
    d = sample_sector_distances(np.random.default_rng(0), 5, 1000, 800, 0.125)
    assert d.shape == (1000, 5)
    assert (np.diff(d, axis=1) >= 0).all()
    assert d.min() >= NEAR and d.max() <= 800
    # radial density proportional to d: P(d <= r/2) = 1/4
    assert (d <= 400).mean() == pytest.approx(0.25, abs=0.02)


def test_pbar_table_keys():
    t = pbar_table(PERFECT, 800, RngStream(3), samples=2000)
    assert sorted(t) == list(range(1, 16))
    assert t[1] == 1.0
