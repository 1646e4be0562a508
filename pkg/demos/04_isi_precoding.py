"""
Relay networks with skip links: ISI and lattice precoding
=========================================================

When paths have different relay counts the copies of a symbol arrive at
different times and the network becomes an ISI channel.  A feedforward
MMSE filter leaves only post-cursor interference, which the encoder knows
and removes with modulo-lattice precoding behind a block interleaver.
"""
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from latticeaf.harness import parse_network
from latticeaf.isi import (
    IsiChannel,
    capacity_quad,
    causality_violations,
    isi_capacity,
    noise_psd,
    reduce_to_isi,
    simulate_isi_link,
)
from latticeaf.lattice import make_lattice
from latticeaf.nested import build_nested_pair

rng = np.random.default_rng(4)
net = parse_network(Path(__file__).parent / "networks" / "skip_link.json")
ch = reduce_to_isi(net)
print("layered:", net.is_layered)
print("taps h_0..h_L:", np.round(ch.taps, 4))
w = np.linspace(0, np.pi, 5)
print("noise PSD on [0, pi]:", np.round(noise_psd(ch, w), 3))

rep = isi_capacity(ch, ff_len=32)
print(f"C_ISI = {rep.c_isi:.4f} bits, SNR_MMSE-DFE = {rep.snr_mmse_dfe:.3f},"
      f" 32-tap FIR reaches {rep.fir_snr:.3f}")
print("post-cursor taps:", np.round(rep.postcursor_taps, 4))

# guard rows make the interleaver causal
L = len(rep.postcursor_taps)
print(f"causality violations, {L} guard rows:", len(causality_violations(L + 4, 8, L, L)))
print("causality violations, no guard rows:", len(causality_violations(L + 4, 8, L, 0)))

# E8 with M=8 is 3 bits per dimension; pick P so this is 75% of C_ISI
taps, noise = ch.taps, ch.noise_transfer
p = brentq(lambda s: capacity_quad(IsiChannel(taps, s, noise)) - 4.0, 1.0, 1e6)
hot = IsiChannel(taps, p, noise)
pair = build_nested_pair(make_lattice("e8", 8), 8, p)
stats = simulate_isi_link(hot, pair, 500, rng, ff_len=32)
lo, hi = stats.confidence_interval()
print(f"P_s = {p:.1f}: {stats.message_errors}/{stats.messages} message errors,"
      f" 95% CI [{lo:.2e}, {hi:.2e}]")
