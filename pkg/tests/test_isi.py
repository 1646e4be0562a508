import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from latticeaf.isi import (
    IsiChannel,
    IsiError,
    capacity_grid,
    capacity_quad,
    causality_violations,
    deinterleave,
    interleave,
    isi_capacity,
    mmse_dfe,
    noise_psd,
    precode_dirty_paper,
    reduce_to_isi,
    simulate_isi_link,
)
from latticeaf.lattice import gosset_lattice, integer_lattice
from latticeaf.nested import awgn_errors, build_nested_pair, decode_message, encode, mmse_alpha
from latticeaf.network import (
    NetworkError,
    RelayNetwork,
    amplification_gains,
    equivalent_channel,
    random_layered_network,
)

from conftest import all_paths, random_dag, tap_oracle

TWO_TAP_CLOSED_FORM = 0.5 * math.log2((3 + math.sqrt(5)) / 2)


# --- reduction ------------------------------------------------------------


def test_taps_match_path_enumeration(rng):
    checked = 0
    while checked < 150:
        net = random_dag(rng)
        if len(all_paths(net)) > 20:
            continue
        beta = amplification_gains(net)
        ch = reduce_to_isi(net)
        ref = tap_oracle(net, beta)
        n = max(len(ref), len(ch.taps))
        a = np.pad(ch.taps, (0, n - len(ch.taps)))
        b = np.pad(ref, (0, n - len(ref)))
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(b)))
        checked += 1


def test_diamond_with_explicit_beta():
    gains = {("s", "d"): 1.0, ("s", "r"): 2.0, ("r", "d"): 3.0}
    net = RelayNetwork(("s", "r", "d"), "s", "d", gains, {"s": 1.0, "r": 1.0})
    ch = reduce_to_isi(net, beta={"r": 0.5})
    assert np.allclose(ch.taps, [1.0, 3.0], atol=1e-15)
    assert np.allclose(ch.noise_transfer["r"], [0.0, 1.5])


def test_parallel_paths_add():
    # path products 1.5 and 0.5 at equal delay
    gains = {("s", "a"): 1.5, ("a", "d"): 1.0, ("s", "b"): 0.5, ("b", "d"): 1.0}
    net = RelayNetwork(("s", "a", "b", "d"), "s", "d", gains, {"s": 1.0, "a": 1.0, "b": 1.0})
    ch = reduce_to_isi(net, beta={"a": 1.0, "b": 1.0})
    assert np.allclose(ch.taps, [0.0, 2.0])


def test_cycle_rejected():
    gains = {("s", "a"): 1.0, ("a", "b"): 1.0, ("b", "a"): 1.0, ("b", "d"): 1.0}
    with pytest.raises(NetworkError):
        RelayNetwork(("s", "a", "b", "d"), "s", "d", gains, {"s": 1.0, "a": 1.0, "b": 1.0})


def test_layered_reduces_to_single_tap(rng):
    for _ in range(50):
        net = random_layered_network(rng)
        eq = equivalent_channel(net)
        ch = reduce_to_isi(net)
        L = net.num_layers
        nz = np.nonzero(np.abs(ch.taps) > 1e-14)[0]
        assert list(nz) == [L - 1]
        assert ch.taps[L - 1] == pytest.approx(eq.gain, rel=1e-12)
        # all relay noise arrives at a single delay too, so the spectrum is flat
        w = np.linspace(-math.pi, math.pi, 7)
        assert np.allclose(noise_psd(ch, w), 1 + eq.propagated_noise_power, rtol=1e-12)
        assert capacity_quad(ch) == pytest.approx(0.5 * math.log2(1 + eq.snr), abs=1e-9)


# --- noise spectrum -------------------------------------------------------


def test_psd_examples():
    w = np.linspace(-math.pi, math.pi, 33)
    assert np.allclose(noise_psd(IsiChannel([1.0], 1.0), w), 1.0)
    flat = IsiChannel([1.0, 1.0], 1.0, {"r": [0.0, 0.7]})
    assert np.allclose(noise_psd(flat, w), 1.49)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_psd_at_least_one(g1, g2):
    ch = IsiChannel([1.0], 1.0, {"a": g1, "b": g2})
    assert np.all(noise_psd(ch, np.linspace(-math.pi, math.pi, 65)) >= 1.0 - 1e-12)


def test_psd_matches_autocorrelation():
    ch = IsiChannel([1.0], 1.0, {"a": [0.0, 0.5, 0.2], "b": [0.3, -0.4]})
    r = ch.noise_autocorrelation(4)
    w = np.linspace(-math.pi, math.pi, 4096, endpoint=False)
    s = noise_psd(ch, w)
    for m in range(5):
        assert np.mean(s * np.cos(m * w)) == pytest.approx(r[m], abs=1e-12)


def test_simulated_noise_autocovariance(rng):
    # relay noise coloured by the transfer polynomials, plus white destination noise
    net = RelayNetwork(
        ("s", "a", "b", "d"), "s", "d",
        {("s", "a"): 3.0, ("a", "b"): 2.0, ("b", "d"): 1.0, ("a", "d"): 0.6, ("s", "d"): 0.4},
        {"s": 10.0, "a": 20.0, "b": 20.0},
    )
    ch = reduce_to_isi(net)
    beta = amplification_gains(net)
    n = 400_000
    za, zb, zd = rng.standard_normal((3, n))
    # direct time-domain model: each relay forwards beta * (its input) one step later
    ya = za
    xa = np.concatenate(([0.0], beta["a"] * ya[:-1]))
    yb = 2.0 * xa + zb
    xb = np.concatenate(([0.0], beta["b"] * yb[:-1]))
    z = 1.0 * xb + 0.6 * xa + zd
    z = z[10:]
    r = ch.noise_autocorrelation(4)
    for m in range(5):
        prod = z[: len(z) - m] * z[m:]
        assert abs(prod.mean() - r[m]) < 4 * prod.std() / math.sqrt(len(prod))


# --- capacity -------------------------------------------------------------


def test_single_tap_capacity():
    rep = isi_capacity(IsiChannel([1.0], 3.0))
    assert rep.c_isi == pytest.approx(1.0, abs=1e-9)
    assert rep.snr_mmse_dfe == pytest.approx(3.0, abs=1e-9)
    ch = IsiChannel([0.0, 0.0, 1.3], 2.0, {"r": [0.0, 0.0, 0.5]})
    assert capacity_quad(ch) == pytest.approx(0.5 * math.log2(1 + 2.0 * 1.69 / 1.25), abs=1e-9)


def test_two_tap_closed_form():
    ch = IsiChannel([1.0, 1.0], 1.0)
    assert abs(capacity_quad(ch) - TWO_TAP_CLOSED_FORM) < 1e-3
    assert capacity_quad(ch) == pytest.approx(0.6942, abs=1e-4)
    assert capacity_quad(ch) == pytest.approx(TWO_TAP_CLOSED_FORM, abs=1e-9)


def test_report_consistency():
    ch = IsiChannel([1.0, 0.6, 0.3], 20.0, {"r": [0.0, 0.5, 0.2]})
    rep = isi_capacity(ch)
    assert rep.c_isi == pytest.approx(0.5 * math.log2(1 + rep.snr_mmse_dfe), rel=1e-14)
    # a long FIR equalizer realizes the integral
    assert rep.fir_snr == pytest.approx(rep.snr_mmse_dfe, rel=1e-6)
    assert rep.fir_capacity <= rep.c_isi + 1e-9


def test_fir_snr_grows_with_length():
    ch = IsiChannel([1.0, 0.9], 10.0, {"r": [0.0, 0.8]})
    snrs = [mmse_dfe(ch, k).snr for k in (1, 2, 4, 8, 32)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(snrs, snrs[1:]))
    assert snrs[-1] == pytest.approx(2 ** (2 * capacity_quad(ch)) - 1, rel=1e-6)


def test_zero_taps():
    rep = isi_capacity(IsiChannel([0.0, 0.0], 1.0))
    assert rep.c_isi == 0.0 and rep.snr_mmse_dfe == 0.0


@pytest.mark.parametrize(
    "taps,noise",
    [([1.0, 1.0], {}), ([1.0, 0.6, 0.3], {"r": [0.0, 0.5, 0.2]}), ([0.2, 1.0, -0.7], {"a": [0.0, 1.0], "b": [0.0, 0.0, 0.6]})],
)
def test_quadrature_convergence(taps, noise):
    ch = IsiChannel(taps, 5.0, noise)
    c = capacity_quad(ch)
    assert abs(capacity_grid(ch, 64) - capacity_grid(ch, 128)) < 1e-6
    assert abs(capacity_grid(ch, 128) - c) < 1e-6


def test_high_snr_slope():
    ch = IsiChannel([1.0, 0.8, 0.3], 1.0, {"r": [0.0, 0.4]})
    ps = [1e4, 1e5, 1e6, 1e7]
    cs = [capacity_quad(IsiChannel(ch.taps, p, ch.noise_transfer)) for p in ps]
    slopes = np.diff(cs) / np.diff(np.log2(ps))
    assert np.allclose(slopes, 0.5, atol=1e-3)


# --- precoding ------------------------------------------------------------


def test_zero_interference_is_plain_encoding(rng):
    pair = build_nested_pair(gosset_lattice(), 3, 1.0)
    w = rng.integers(0, pair.num_messages, 50)
    u = rng.standard_normal((50, 8)) * 0.1
    a = precode_dirty_paper(pair, w, np.zeros((50, 8)), 0.7, dither=u)
    b = encode(pair, w, dither=u)
    assert np.array_equal(a.channel_input, b.channel_input)


def test_noiseless_precoding_recovers_everything(rng):
    pair = build_nested_pair(gosset_lattice(), 4, 2.0)
    w = rng.integers(0, pair.num_messages, 1000)
    s = rng.uniform(-50, 50, (1000, 8))
    cw = precode_dirty_paper(pair, w, s, 1.0, rng)
    assert np.array_equal(decode_message(pair, cw.channel_input + s, cw.dither, 1.0), w)


def test_precoding_power_is_interference_free(rng):
    pair = build_nested_pair(integer_lattice(4), 4, 3.0)
    s = 40.0 * rng.standard_normal((50_000, 4))
    x = precode_dirty_paper(pair, np.zeros(50_000, dtype=int), s, 0.8, rng).channel_input
    e = np.sum(x * x, axis=1) / 4
    assert abs(e.mean() - 3.0) < 3 * e.std() / math.sqrt(len(e))


def test_precoding_error_rate_near_baseline(rng):
    pair = build_nested_pair(integer_lattice(4), 4, 1.0)
    snr = 10 ** 1.5
    alpha = mmse_alpha(snr)
    trials = 40_000
    base = awgn_errors(pair, snr, trials, rng, alpha=alpha)
    w = rng.integers(0, pair.num_messages, trials)
    s = 10.0 * rng.standard_normal((trials, 4))
    cw = precode_dirty_paper(pair, w, s, alpha, rng)
    y = cw.channel_input + s + rng.standard_normal((trials, 4)) / math.sqrt(snr)
    err = int(np.count_nonzero(decode_message(pair, y, cw.dither, alpha) != w))
    assert base > 50
    assert err <= 2 * base and base <= 2 * err


# --- interleaving ---------------------------------------------------------


def test_transmission_order():
    block = np.array([[f"r{r}c{c}" for c in range(4)] for r in range(3)])
    seq = interleave(block, memory=2)
    assert list(seq[:4]) == ["r0c0", "r1c0", "r2c0", "r0c1"]
    assert len(seq) == 12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
def test_interleave_round_trip(rows, cols, seed):
    x = np.random.default_rng(seed).standard_normal((rows, cols))
    assert np.array_equal(deinterleave(interleave(x), rows), x)


def test_depth_error():
    with pytest.raises(IsiError):
        interleave(np.zeros((2, 4)), memory=2)
    interleave(np.zeros((3, 4)), memory=2)


def test_causality_audit():
    # with two guard rows every interfering symbol is already encoded
    assert causality_violations(3, 4, 2, guard_rows=2) == []
    assert causality_violations(10, 8, 3, guard_rows=3) == []
    # without guards, the top rows are hit by the bottom of the previous column
    assert causality_violations(3, 4, 2, guard_rows=0)


# --- link simulation ------------------------------------------------------


def test_single_tap_link_matches_awgn(rng):
    pair = build_nested_pair(integer_lattice(4), 4, 30.0)
    ch = IsiChannel([1.0], 30.0)
    stats = simulate_isi_link(ch, pair, 2000, rng, ff_len=1)
    assert stats.guard_rows == 0
    p_link = stats.message_error_rate
    trials = 30_000
    p_ref = awgn_errors(pair, 30.0, trials, np.random.default_rng(1), alpha=stats.alpha) / trials
    sd = math.sqrt(p_link * (1 - p_link) / stats.messages + p_ref * (1 - p_ref) / trials)
    assert p_ref > 0.01
    assert abs(p_link - p_ref) < 3.5 * sd


def test_noiseless_link_is_error_free(rng):
    ch = IsiChannel([1.0, 0.6, 0.3], 5.0, {"r": [0.0, 0.5, 0.2]})
    pair = build_nested_pair(gosset_lattice(), 4, 5.0)
    stats = simulate_isi_link(ch, pair, 200, rng, ff_len=16, noise_on=False)
    assert stats.message_errors == 0
    assert stats.alpha == 1.0


def test_codec_power_mismatch(rng):
    ch = IsiChannel([1.0, 0.5], 5.0)
    with pytest.raises(IsiError):
        simulate_isi_link(ch, build_nested_pair(integer_lattice(2), 2, 4.0), 1, rng)


def test_link_below_capacity(rng):
    # rate 3 bits per dimension at 75% of the ISI capacity
    taps, noise = [1.0, 0.6, 0.3], {"r": [0.0, 0.5, 0.2]}
    p = _power_for_capacity(taps, noise, 4.0)
    ch = IsiChannel(taps, p, noise)
    assert capacity_quad(ch) == pytest.approx(4.0, abs=1e-6)
    pair = build_nested_pair(gosset_lattice(), 8, p)
    stats = simulate_isi_link(ch, pair, 10_000, rng, ff_len=32)
    assert stats.message_error_rate < 1e-2
    lo, hi = stats.confidence_interval()
    assert lo <= stats.message_error_rate <= hi


def _power_for_capacity(taps, noise, target):
    return brentq(lambda p: capacity_quad(IsiChannel(taps, p, noise)) - target, 1.0, 1e6, xtol=1e-10)
