"""
Amplify-and-forward over a layered relay network
================================================

A layered network collapses to y = h x + noise.  Here we check that
collapse by simulation, compare the propagated relay noise with its
high-SNR bounds, and watch the guaranteed rate approach the cut-set bound
as the relays get more power.
"""
from pathlib import Path

import numpy as np

from latticeaf.harness import parse_network
from latticeaf.lattice import make_lattice
from latticeaf.nested import build_nested_pair, decode_message, encode
from latticeaf.network import (
    equivalent_channel,
    exact_propagated_noise,
    mac_cutset,
    rate_laf,
    received_powers,
    simulate_af,
)

rng = np.random.default_rng(3)
net = parse_network(Path(__file__).parent / "networks" / "layered_3hop.json")
print("layers:", net.layers)
print("received powers:", {k: round(v, 2) for k, v in received_powers(net).items()})

eq = equivalent_channel(net)
noise = exact_propagated_noise(net)
print(f"delta = {eq.delta:.4g}, end-to-end gain = {eq.gain:.4f}")
print(f"relay noise at d: exact {noise.total:.4f} <= series {noise.series_bound:.4f}"
      f" <= L delta P_d {noise.linear_bound:.4f}")

# noiseless: the relays just scale the signal
x = rng.normal(size=5)
print("y/h - x (noiseless):", simulate_af(net, x, noise_on=False) / eq.gain - x)

# lattice code through the network
pair = build_nested_pair(make_lattice("dn", 4), 4, eq.source_power)
trials = 20_000
w = rng.integers(0, pair.num_messages, trials)
cw = encode(pair, w, rng)
y = simulate_af(net, cw.channel_input.reshape(-1), rng).reshape(cw.channel_input.shape)
w_hat = decode_message(pair, y / eq.gain, cw.dither, eq.alpha())
print(f"D4, M=4 (rate {pair.coding_rate:.2f}) at SNR {10 * np.log10(eq.snr):.1f} dB:"
      f" message error rate {np.mean(w_hat != w):.4f}")

# more relay power -> smaller delta -> rate closer to the MAC cut
print()
print("scale    delta      C_MAC    R_LAF    exact")
for scale in (1, 10, 100, 1000):
    e = equivalent_channel(net.scaled_powers(scale))
    print(f"{scale:5d}  {e.delta:9.2e}  {mac_cutset(e.received_power):7.4f}"
          f"  {rate_laf(e.received_power, e.delta, e.num_layers):7.4f}"
          f"  {0.5 * np.log2(1 + e.snr):7.4f}")
